mod common;

use std::collections::BTreeSet;
use std::sync::{Arc, Barrier};
use std::thread;

use common::*;
use pausepoint_core::gallery::{AnnotationDraft, AnnotationKind, GalleryQuery, ReviewFilter, TrackKind};
use pausepoint_core::media::Label;
use pausepoint_core::model::{BackgroundImage, Modality, PlanEntry};
use pausepoint_core::platform::NoRemoteImages;
use pausepoint_core::session::SessionState;
use pausepoint_core::store::{MediaType, RecordKind};
use pausepoint_core::{Error, Principal, Ratings, SegmentDraft, Submission};

fn ratings(c: u8, h: u8) -> Option<Ratings> {
    Some(Ratings {
        confidence: c,
        helpfulness: h,
    })
}

fn ink_audio(ms: u64) -> Submission {
    Submission {
        ink: Some(stroke_ink(ms)),
        audio: Some(sine_wav(ms, 16_000, 0.5)),
        ratings: ratings(3, 4),
        ..Default::default()
    }
}

#[test]
fn authoring_lifecycle() {
    let f = fixture();
    let p = &f.platform;
    let student = f.student(1);
    assert_eq!(p.create_lesson(&student, "x").unwrap_err().code(), "forbidden-role");
    assert_eq!(p.create_lesson(&f.teacher, "  ").unwrap_err().code(), "empty-title");

    let lesson = p.create_lesson(&f.teacher, "Optics").unwrap();
    assert_eq!(
        p.publish_lesson(&f.teacher, lesson.lesson_id, &NoRemoteImages).unwrap_err().code(),
        "empty-lesson"
    );
    let err = p
        .add_segment(&f.teacher, lesson.lesson_id, &SegmentDraft::Exercise(draft("ink", 0)))
        .unwrap_err();
    assert_eq!(err.code(), "limit-out-of-range");
    let err = p
        .add_segment(&f.teacher, lesson.lesson_id, &SegmentDraft::Exercise(draft("smell", 30)))
        .unwrap_err();
    assert_eq!(err.code(), "unknown-mode");

    let video = p.store().put_blob(b"clip", MediaType::Video).unwrap();
    for seg in [
        SegmentDraft::Video {
            blob: video.hash.clone(),
            duration_ms: Some(12_000),
        },
        SegmentDraft::Exercise(draft("ink+audio", 45)),
        SegmentDraft::Video {
            blob: video.hash.clone(),
            duration_ms: Some(8_000),
        },
        SegmentDraft::Exercise(draft("audio", 30)),
    ] {
        p.add_segment(&f.teacher, lesson.lesson_id, &seg).unwrap();
    }
    assert_eq!(p.timeline(&student, lesson.lesson_id).unwrap_err().code(), "unpublished");
    p.publish_lesson(&f.teacher, lesson.lesson_id, &NoRemoteImages).unwrap();
    let again = p.publish_lesson(&f.teacher, lesson.lesson_id, &NoRemoteImages).unwrap();
    assert!(again.published);
    let err = p
        .add_segment(&f.teacher, lesson.lesson_id, &SegmentDraft::Exercise(draft("ink", 30)))
        .unwrap_err();
    assert_eq!(err.code(), "lesson-published");

    let view = p.timeline(&student, lesson.lesson_id).unwrap();
    let pauses: Vec<u64> = view.plan.pauses().map(|(_, o)| o).collect();
    assert_eq!(pauses, vec![12_000, 20_000]);
    assert_eq!(view.exercises.len(), 2);
    assert!(view.exercises[0].canvas && view.exercises[0].microphone && !view.exercises[0].camera);
    assert_eq!(
        serde_json::to_vec(&view).unwrap(),
        serde_json::to_vec(&p.timeline(&student, lesson.lesson_id).unwrap()).unwrap()
    );
    assert!(matches!(view.plan.entries[0], PlanEntry::Play { start_offset_ms: 0, .. }));
}

#[test]
fn invalid_background_blocks_segment() {
    let f = fixture();
    let p = &f.platform;
    let lesson = p.create_lesson(&f.teacher, "Maps").unwrap();
    let not_image = p.store().put_blob(b"RIFF", MediaType::Wav).unwrap();
    let mut d = draft("ink", 30);
    d.background = Some(BackgroundImage::Blob(not_image));
    let err = p
        .add_segment(&f.teacher, lesson.lesson_id, &SegmentDraft::Exercise(d))
        .unwrap_err();
    assert_eq!(err.code(), "background-unavailable");

    let mut d = draft("ink", 30);
    d.background = Some(BackgroundImage::Url("http://example.invalid/map.png".into()));
    p.add_segment(&f.teacher, lesson.lesson_id, &SegmentDraft::Exercise(d)).unwrap();
    let err = p.publish_lesson(&f.teacher, lesson.lesson_id, &NoRemoteImages).unwrap_err();
    assert_eq!(err.code(), "background-unavailable");
    assert!(!p.lesson(&f.teacher, lesson.lesson_id).unwrap().published);
}

#[test]
fn time_limit_with_grace() {
    let f = fixture();
    let (_, ex) = f.lesson(&[draft("ink+audio", 45)]);
    let p = &f.platform;
    for (n, ms, ok) in [(1, 45_000, true), (2, 47_000, true), (3, 47_001, false)] {
        let s = f.student(n);
        let (session, _) = p.start_session(&s, ex[0]).unwrap();
        let sub = Submission {
            ink: Some(stroke_ink(ms)),
            ratings: ratings(3, 3),
            ..Default::default()
        };
        let result = p.submit(&s, ex[0], &session.session_id, sub);
        match ok {
            true => assert_eq!(result.unwrap().duration_ms, ms),
            false => assert!(matches!(
                result.unwrap_err(),
                Error::OverLimit {
                    duration_ms: 47_001,
                    allowed_ms: 47_000
                }
            )),
        }
    }
}

#[test]
fn submission_validation() {
    let f = fixture();
    let (_, ex) = f.lesson(&[draft("ink", 30), draft("ink+video", 30)]);
    let p = &f.platform;
    let s = f.student(1);
    let (session, descriptor) = p.start_session(&s, ex[0]).unwrap();
    assert!(descriptor.canvas && !descriptor.microphone);
    let token = &session.session_id;

    let cases = [
        (
            Submission {
                audio: Some(silent_wav(1000, 16_000)),
                ratings: ratings(3, 3),
                ..Default::default()
            },
            "mode-mismatch",
        ),
        (
            Submission {
                ratings: ratings(3, 3),
                ..Default::default()
            },
            "malformed-artifact",
        ),
        (
            Submission {
                ink: Some(b"{\"version\":1".to_vec()),
                ratings: ratings(3, 3),
                ..Default::default()
            },
            "malformed-artifact",
        ),
        (
            Submission {
                ink: Some(stroke_ink(1000)),
                ratings: ratings(0, 3),
                ..Default::default()
            },
            "invalid-rating",
        ),
        (
            Submission {
                ink: Some(stroke_ink(1000)),
                ratings: None,
                ..Default::default()
            },
            "malformed-artifact",
        ),
    ];
    for (sub, code) in cases {
        assert_eq!(p.submit(&s, ex[0], token, sub).unwrap_err().code(), code);
    }
    assert_eq!(p.session(token).unwrap().state, SessionState::Open);

    let other = f.student(2);
    let sub = Submission {
        ink: Some(stroke_ink(1000)),
        ratings: ratings(3, 3),
        ..Default::default()
    };
    assert_eq!(p.submit(&other, ex[0], token, sub.clone()).unwrap_err().code(), "session-not-owned");
    assert_eq!(p.submit(&f.teacher, ex[0], token, sub.clone()).unwrap_err().code(), "forbidden-role");

    p.submit(&s, ex[0], token, sub.clone()).unwrap();
    assert_eq!(p.submit(&s, ex[0], token, sub.clone()).unwrap_err().code(), "session-terminal");
    let (fresh, _) = p.start_session(&s, ex[0]).unwrap();
    assert_eq!(
        p.submit(&s, ex[0], &fresh.session_id, sub).unwrap_err().code(),
        "duplicate-submission"
    );

    let (vs, d) = p.start_session(&s, ex[1]).unwrap();
    assert!(d.camera && d.microphone && d.canvas);
    let video_without_audio = Submission {
        video: Some(b"webm".to_vec()),
        declared_duration_ms: Some(5000),
        ratings: ratings(2, 2),
        ..Default::default()
    };
    assert_eq!(
        p.submit(&s, ex[1], &vs.session_id, video_without_audio).unwrap_err().code(),
        "malformed-artifact"
    );
    let video = Submission {
        video: Some(b"webm".to_vec()),
        audio: Some(sine_wav(3000, 16_000, 0.3)),
        declared_duration_ms: Some(5000),
        ratings: ratings(2, 2),
        ..Default::default()
    };
    let bundle = p.submit(&s, ex[1], &vs.session_id, video).unwrap();
    assert_eq!(bundle.duration_ms, 5000);
    assert_eq!(bundle.consistency_warnings.len(), 1);
}

#[test]
fn rerecord_discards_the_old_take() {
    let f = fixture();
    let (_, ex) = f.lesson(&[draft("ink", 30)]);
    let p = &f.platform;
    let s = f.student(1);
    let (first, _) = p.start_session(&s, ex[0]).unwrap();
    let (second, _) = p.discard_and_rerecord(&s, &first.session_id).unwrap();
    assert_eq!(p.session(&first.session_id).unwrap().state, SessionState::Discarded);
    assert_eq!(
        p.discard_and_rerecord(&s, &first.session_id).unwrap_err().code(),
        "session-terminal"
    );
    let sub = Submission {
        ink: Some(stroke_ink(1000)),
        ratings: ratings(3, 3),
        ..Default::default()
    };
    assert_eq!(
        p.submit(&s, ex[0], &first.session_id, sub.clone()).unwrap_err().code(),
        "session-terminal"
    );
    p.submit(&s, ex[0], &second.session_id, sub).unwrap();
}

#[test]
fn students_cannot_record_unpublished_lessons() {
    let f = fixture();
    let p = &f.platform;
    let lesson = p.create_lesson(&f.teacher, "Draft").unwrap();
    let l = p
        .add_segment(&f.teacher, lesson.lesson_id, &SegmentDraft::Exercise(draft("ink", 30)))
        .unwrap();
    let ex = l.exercises().next().unwrap().exercise_id;
    let s = f.student(1);
    assert_eq!(p.start_session(&s, ex).unwrap_err().code(), "lesson-unpublished");
}

#[test]
fn processing_labels_and_thumbnails() {
    let f = fixture();
    let (_, ex) = f.lesson(&[draft("ink+audio", 60)]);
    let p = &f.platform;
    let cases = [
        (stroke_ink(2000), sine_wav(2000, 16_000, 0.5), vec![]),
        (empty_ink(2000), sine_wav(2000, 16_000, 0.5), vec![Label::NoInk]),
        (stroke_ink(2000), silent_wav(2000, 16_000), vec![Label::NoAudio]),
        (empty_ink(2000), silent_wav(2000, 8000), vec![Label::NoAudio, Label::NoInk]),
    ];
    let mut ids = Vec::new();
    for (n, (ink, audio, _)) in cases.iter().enumerate() {
        let s = f.student(n);
        let (session, _) = p.start_session(&s, ex[0]).unwrap();
        let sub = Submission {
            ink: Some(ink.clone()),
            audio: Some(audio.clone()),
            ratings: ratings(3, 3),
            ..Default::default()
        };
        ids.push(p.submit(&s, ex[0], &session.session_id, sub).unwrap().response_id);
    }
    let viewer = f.teacher.clone();
    assert_eq!(
        p.playback_manifest(&viewer, ids[0]).unwrap_err().code(),
        "not-yet-processed"
    );
    assert_eq!(p.unprocessed_responses().unwrap().len(), 4);
    assert_eq!(p.process_pending().unwrap(), 4);
    assert_eq!(p.process_pending().unwrap(), 0);
    for ((_, _, expected), id) in cases.iter().zip(&ids) {
        let (_, bundle) = p.response(*id).unwrap();
        assert!(bundle.processed);
        let labels: BTreeSet<Label> = bundle.labels.iter().collect();
        assert_eq!(labels, expected.iter().copied().collect());
        let (thumb, png) = p.store().read_blob(&bundle.thumbnail_ref.unwrap().hash).unwrap();
        assert_eq!(thumb.media_type, MediaType::Png);
        let img = image::load_from_memory(&png).unwrap();
        assert_eq!((img.width(), img.height()), (320, 240));
    }
    let report = p.reprocess(ex[0]).unwrap();
    assert_eq!((report.examined, report.updated), (4, 0));
}

#[test]
fn thirty_two_students_and_eight_duplicate_submits() {
    let f = fixture();
    let (_, ex) = f.lesson(&[draft("ink+audio", 60)]);
    let platform = Arc::new(f.platform);
    let barrier = Arc::new(Barrier::new(32));
    let handles: Vec<_> = (0..32)
        .map(|n| {
            let p = platform.clone();
            let barrier = barrier.clone();
            let s = Principal::student(&format!("s{n}"), &format!("S{n}"));
            p.register_principal(&s, None).unwrap();
            let ex = ex[0];
            thread::spawn(move || {
                let (session, _) = p.start_session(&s, ex).unwrap();
                barrier.wait();
                p.submit(&s, ex, &session.session_id, ink_audio(1500))
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap().unwrap();
    }
    assert_eq!(platform.responses_for(ex[0]).unwrap().len(), 32);

    let lone = Principal::student("lone", "Lone");
    platform.register_principal(&lone, None).unwrap();
    let barrier = Arc::new(Barrier::new(8));
    let (_, ex2) = {
        let lesson = platform.create_lesson(&f.teacher, "Second").unwrap();
        let l = platform
            .add_segment(&f.teacher, lesson.lesson_id, &SegmentDraft::Exercise(draft("ink+audio", 60)))
            .unwrap();
        platform.publish_lesson(&f.teacher, l.lesson_id, &NoRemoteImages).unwrap();
        let ids: Vec<_> = l.exercises().map(|e| e.exercise_id).collect();
        (l, ids)
    };
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let p = platform.clone();
            let barrier = barrier.clone();
            let s = lone.clone();
            let ex = ex2[0];
            thread::spawn(move || {
                let (session, _) = p.start_session(&s, ex).unwrap();
                barrier.wait();
                p.submit(&s, ex, &session.session_id, ink_audio(1500))
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    assert!(results
        .iter()
        .filter_map(|r| r.as_ref().err())
        .all(|e| e.code() == "duplicate-submission"));
    assert_eq!(platform.responses_for(ex2[0]).unwrap().len(), 1);
    assert_eq!(platform.store().scan(RecordKind::SubmissionClaim).len(), 33);
}

#[test]
fn gallery_access_review_and_annotations() {
    let f = fixture();
    let mut open = draft("ink+audio", 60);
    open.student_gallery_access = Some(true);
    let (_, ex) = f.lesson(&[draft("ink+audio", 60), open]);
    let p = &f.platform;
    let mut ids = Vec::new();
    for n in 0..3 {
        let s = f.student(n);
        for e in &ex {
            let (session, _) = p.start_session(&s, *e).unwrap();
            let sub = Submission {
                ink: Some(if n == 0 { empty_ink(1000) } else { stroke_ink(1000 + n as u64) }),
                audio: Some(sine_wav(1000, 16_000, 0.5)),
                ratings: ratings(3, 5 - n as u8),
                ..Default::default()
            };
            let b = p.submit(&s, *e, &session.session_id, sub).unwrap();
            if *e == ex[0] {
                ids.push(b.response_id);
            }
        }
    }
    p.process_pending().unwrap();
    let student = f.student(0);
    let other_teacher = Principal::teacher("t2", "Grace");
    p.register_principal(&other_teacher, None).unwrap();

    assert_eq!(
        p.list_responses(&student, ex[0], &GalleryQuery::default()).unwrap_err().code(),
        "forbidden-role"
    );
    assert_eq!(
        p.list_responses(&other_teacher, ex[0], &GalleryQuery::default()).unwrap_err().code(),
        "forbidden-role"
    );
    let student_view = p.list_responses(&student, ex[1], &GalleryQuery::default()).unwrap();
    assert_eq!(student_view.len(), 3);
    assert!(student_view.iter().all(|c| c.labels.is_empty()));

    let ink_only = GalleryQuery {
        mode_present: Some(Modality::Ink),
        ..GalleryQuery::default()
    };
    let cards = p.list_responses(&f.teacher, ex[0], &ink_only).unwrap();
    assert_eq!(cards.iter().map(|c| c.response_id).collect::<Vec<_>>(), ids[1..].to_vec());

    let not_reviewed = GalleryQuery {
        review_status: Some(ReviewFilter::NotReviewed),
        ..GalleryQuery::default()
    };
    assert_eq!(p.list_responses(&f.teacher, ex[0], &not_reviewed).unwrap().len(), 3);
    let manifest = p.playback_manifest(&f.teacher, ids[1]).unwrap();
    assert_eq!(manifest.tracks.len(), 2);
    assert!(manifest.tracks.iter().all(|t| t.clock_origin_ms == 0));
    assert_eq!(manifest.tracks[0].kind, TrackKind::Ink);
    assert_eq!(manifest.duration_ms, 1001);
    let state = p.mark_reviewed(&f.teacher, ids[1]).unwrap();
    assert!(state.reviewed);
    let remaining: Vec<_> = p
        .list_responses(&f.teacher, ex[0], &not_reviewed)
        .unwrap()
        .into_iter()
        .map(|c| c.response_id)
        .collect();
    assert_eq!(remaining, vec![ids[0], ids[2]]);

    let like = AnnotationDraft {
        kind: AnnotationKind::Like,
        body: None,
        parent_id: None,
    };
    let a = p.add_annotation(&f.teacher, ids[1], &like).unwrap();
    let b = p.add_annotation(&f.teacher, ids[1], &like).unwrap();
    assert_eq!(a, b);
    let bad_like = AnnotationDraft {
        body: Some("nice".into()),
        ..like.clone()
    };
    assert_eq!(p.add_annotation(&f.teacher, ids[1], &bad_like).unwrap_err().code(), "like-with-body");
    let empty = AnnotationDraft {
        kind: AnnotationKind::Comment,
        body: Some("   ".into()),
        parent_id: None,
    };
    assert_eq!(p.add_annotation(&f.teacher, ids[1], &empty).unwrap_err().code(), "empty-comment");
    let comment = p
        .add_annotation(
            &f.teacher,
            ids[1],
            &AnnotationDraft {
                kind: AnnotationKind::Comment,
                body: Some("Check the sign of the normal force".into()),
                parent_id: None,
            },
        )
        .unwrap();
    let reply = AnnotationDraft {
        kind: AnnotationKind::Comment,
        body: Some("ok".into()),
        parent_id: Some(comment.annotation_id),
    };
    assert_eq!(p.add_annotation(&f.teacher, ids[2], &reply).unwrap_err().code(), "bad-parent");
    let to_like = AnnotationDraft {
        parent_id: Some(a.annotation_id),
        ..reply.clone()
    };
    assert_eq!(p.add_annotation(&f.teacher, ids[1], &to_like).unwrap_err().code(), "bad-parent");
    let r = p.add_annotation(&f.teacher, ids[1], &reply).unwrap();
    assert_eq!(r.parent_id, Some(comment.annotation_id));
    assert_eq!(p.annotations(&f.teacher, ids[1]).unwrap().len(), 3);

    let card = p
        .list_responses(&f.teacher, ex[0], &GalleryQuery::default())
        .unwrap()
        .into_iter()
        .find(|c| c.response_id == ids[1])
        .unwrap();
    assert_eq!((card.like_count, card.comment_count), (1, 2));
    assert!(card.reviewed_by_viewer);
    assert_eq!(card.student_name, "Student 01");
}
