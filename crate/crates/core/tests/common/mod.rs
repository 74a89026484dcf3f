#![allow(dead_code)]

use std::f64::consts::PI;

use pausepoint_core::ink::{InkEvent, InkStream};
use pausepoint_core::media::{encode_wav, AudioTrack};
use pausepoint_core::model::ExerciseDraft;
use pausepoint_core::platform::NoRemoteImages;
use pausepoint_core::store::MediaType;
use pausepoint_core::{ExerciseId, Lesson, Platform, PlatformConfig, Principal, SegmentDraft, Store};
use tempfile::TempDir;

pub struct Fixture {
    pub dir: TempDir,
    pub platform: Platform,
    pub teacher: Principal,
}

pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let platform = Platform::new(Store::open(dir.path()).unwrap(), PlatformConfig::default());
    let teacher = Principal::teacher("t1", "Ada");
    platform.register_principal(&teacher, None).unwrap();
    Fixture { dir, platform, teacher }
}

pub fn draft(mode: &str, limit_s: i64) -> ExerciseDraft {
    ExerciseDraft {
        instructions: "Sketch the free-body diagram".into(),
        time_limit_s: limit_s,
        input_mode: mode.into(),
        background: None,
        student_gallery_access: None,
    }
}

impl Fixture {
    /// A published lesson: one 60 s video segment followed by one exercise per draft.
    pub fn lesson(&self, drafts: &[ExerciseDraft]) -> (Lesson, Vec<ExerciseId>) {
        let p = &self.platform;
        let lesson = p.create_lesson(&self.teacher, "Statics").unwrap();
        let video = p.store().put_blob(b"not really a video", MediaType::Video).unwrap();
        p.add_segment(
            &self.teacher,
            lesson.lesson_id,
            &SegmentDraft::Video {
                blob: video.hash,
                duration_ms: Some(60_000),
            },
        )
        .unwrap();
        for d in drafts {
            p.add_segment(&self.teacher, lesson.lesson_id, &SegmentDraft::Exercise(d.clone()))
                .unwrap();
        }
        let lesson = p.publish_lesson(&self.teacher, lesson.lesson_id, &NoRemoteImages).unwrap();
        let ids = lesson.exercises().map(|e| e.exercise_id).collect();
        (lesson, ids)
    }

    pub fn student(&self, n: usize) -> Principal {
        let s = Principal::student(&format!("s{n}"), &format!("Student {n:02}"));
        self.platform.register_principal(&s, None).unwrap();
        s
    }
}

pub fn sine_wav(ms: u64, rate: u32, amplitude: f64) -> Vec<u8> {
    let n = (ms * u64::from(rate) / 1000) as usize;
    let samples = (0..n)
        .map(|i| (amplitude * 32767.0 * (2.0 * PI * 440.0 * i as f64 / f64::from(rate)).sin()).round() as i16)
        .collect();
    encode_wav(&AudioTrack::new(samples, rate).unwrap())
}

pub fn silent_wav(ms: u64, rate: u32) -> Vec<u8> {
    let n = (ms * u64::from(rate) / 1000) as usize;
    encode_wav(&AudioTrack::new(vec![0; n], rate).unwrap())
}

/// One diagonal stroke ending at `end_ms`.
pub fn stroke_ink(end_ms: u64) -> Vec<u8> {
    InkStream::new(
        vec![
            InkEvent::down(0, 0.1, 0.1),
            InkEvent::moved(end_ms / 2, 0.5, 0.5),
            InkEvent::up(end_ms),
        ],
        end_ms,
    )
    .unwrap()
    .to_json()
}

pub fn empty_ink(duration_ms: u64) -> Vec<u8> {
    InkStream::empty(duration_ms).to_json()
}
