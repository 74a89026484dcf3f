use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use pausepoint_cli::export::{self, read_records, write_records, Format};
use pausepoint_cli::import;
use pausepoint_cli::local;
use pausepoint_cli::sim::{plan_population, SimProfile};
use pausepoint_cli::simulate::{simulate, target};
use pausepoint_core::gallery::GalleryQuery;
use pausepoint_core::media::Label;
use pausepoint_core::ResponseId;
use serde_json::json;

fn write_manifest(dir: &Path, exercises: &[(&str, u32)], videos: usize) -> PathBuf {
    fs::create_dir_all(dir.join("media")).unwrap();
    let mut segments = Vec::new();
    for v in 0..videos {
        let file = format!("media/slide{v}.webm");
        fs::write(dir.join(&file), format!("video bytes {v}").repeat(100)).unwrap();
        segments.push(json!({"type": "video", "file": file, "duration_ms": 10_000 + 1000 * v as u64}));
        if let Some((mode, limit)) = exercises.get(v) {
            segments.push(json!({
                "type": "exercise",
                "instructions": format!("Exercise after slide {v}"),
                "time_limit_s": limit,
                "input_mode": mode,
                "student_gallery_access": true,
            }));
        }
    }
    let path = dir.join("lesson.json");
    fs::write(&path, serde_json::to_vec_pretty(&json!({"title": "Signals", "segments": segments})).unwrap()).unwrap();
    path
}

fn blob_files(data: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for shard in fs::read_dir(data.join("blobs")).unwrap() {
        let shard = shard.unwrap().path();
        if shard.ends_with("tmp") {
            continue;
        }
        for f in fs::read_dir(shard).unwrap() {
            let f = f.unwrap().path();
            if f.extension().is_none() {
                out.push(f);
            }
        }
    }
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn import_builds_matching_timeline_and_dedups_media() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    let manifest = write_manifest(dir.path(), &[("ink", 30), ("audio", 45)], 8);
    let prepared = import::prepare(&manifest).unwrap();
    assert_eq!(prepared.segments.len(), 10);

    let local = local::open(&data, "operator").await.unwrap();
    let first = import::import(&local.client, &prepared, true).await.unwrap();
    let view = local.client.timeline(first.lesson_id).await.unwrap();
    // Pauses land after slide 0 (10 s) and slide 1 (10 s + 11 s).
    assert_eq!(view.plan.pauses().map(|(_, o)| o).collect::<Vec<_>>(), vec![10_000, 21_000]);
    let blobs_once = blob_files(&data).len();
    assert_eq!(blobs_once, 8);

    let second = import::import(&local.client, &prepared, false).await.unwrap();
    assert_ne!(first.lesson_id, second.lesson_id);
    assert!(!second.published);
    assert_eq!(blob_files(&data).len(), blobs_once);
    local.close().await.unwrap();
}

#[tokio::test]
async fn import_errors() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &[("ink", 30)], 2);
    fs::remove_file(dir.path().join("media/slide1.webm")).unwrap();
    assert_eq!(import::prepare(&manifest).unwrap_err().code, "missing-file");
    assert_eq!(import::prepare(&dir.path().join("absent.json")).unwrap_err().code, "missing-file");

    fs::write(&manifest, r#"{"title": "x", "segments": [{"type": "slideshow"}]}"#).unwrap();
    assert_eq!(import::prepare(&manifest).unwrap_err().code, "bad-manifest");
    fs::write(&manifest, "not json").unwrap();
    assert_eq!(import::prepare(&manifest).unwrap_err().code, "bad-manifest");

    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    let bad = write_manifest(dir.path(), &[("ink+pencil", 30)], 1);
    let prepared = import::prepare(&bad).unwrap();
    let local = local::open(&data, "operator").await.unwrap();
    let err = import::import(&local.client, &prepared, false).await.unwrap_err();
    assert_eq!(err.code, "bad-manifest");
    assert!(err.detail.contains("unknown-mode"), "{}", err.detail);
    local.close().await.unwrap();
}

fn profile(n: usize, ink: f64, silence: f64, seed: u64) -> SimProfile {
    SimProfile {
        n_students: n,
        ink_prob: ink,
        silence_prob: silence,
        duration_range_ms: (1_000, 8_000),
        seed,
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn simulate_export_reprocess() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    let manifest = write_manifest(dir.path(), &[("ink+audio", 60)], 1);
    let local = local::open(&data, "operator").await.unwrap();
    let client = &local.client;
    let lesson = import::import(client, &import::prepare(&manifest).unwrap(), true).await.unwrap();
    let ex = lesson.exercises().next().unwrap().exercise_id;

    let p = profile(30, 0.8, 0.3, 1);
    let first = simulate(client, ex, &p, 8).await.unwrap();
    let second = simulate(client, ex, &p, 3).await.unwrap();
    assert_eq!(first.len(), 30);
    export::wait_processed(client, ex, Duration::from_secs(60)).await.unwrap();
    let hashes = |id: ResponseId| async move {
        let m = client.manifest(id).await.unwrap();
        m.tracks.iter().map(|t| t.artifact_ref.hash.clone()).collect::<Vec<_>>()
    };
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.student_name, b.student_name);
        assert_ne!(a.response_id, b.response_id);
        assert_eq!(hashes(a.response_id).await, hashes(b.response_id).await);
    }

    let records = export::export(client, ex, &GalleryQuery::default(), Duration::from_secs(30)).await.unwrap();
    assert_eq!(records.len(), 60);
    let plans = plan_population(&p, &target(client, ex).await.unwrap());
    let expected_no_ink = plans.iter().filter(|s| s.expected_labels(lesson.exercises().next().unwrap().input_mode).contains(&Label::NoInk)).count();
    let first_ids: Vec<_> = first.iter().map(|s| s.response_id.0).collect();
    let got_no_ink = records
        .iter()
        .filter(|r| first_ids.contains(&r.response_id) && r.labels().any(|l| l == "no-ink"))
        .count();
    assert_eq!(got_no_ink, expected_no_ink);

    let mut csv = Vec::new();
    write_records(&records, Format::Csv, &mut csv).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert_eq!(
        text.lines().next().unwrap(),
        "response_id,student_name,submitted_at,duration_ms,confidence,helpfulness,modes,labels,like_count,comment_count"
    );
    let mut json = Vec::new();
    write_records(&records, Format::Json, &mut json).unwrap();
    assert_eq!(read_records(Format::Csv, &csv[..]).unwrap(), records);
    assert_eq!(read_records(Format::Json, &json[..]).unwrap(), records);

    let labels_before: HashMap<u64, String> = records.iter().map(|r| (r.response_id, r.labels.clone())).collect();
    for _ in 0..2 {
        let report = client.reprocess(ex).await.unwrap();
        assert_eq!((report.examined, report.updated), (60, 0));
    }
    let after = export::export(client, ex, &GalleryQuery::default(), Duration::from_secs(30)).await.unwrap();
    let labels_after: HashMap<u64, String> = after.iter().map(|r| (r.response_id, r.labels.clone())).collect();
    assert_eq!(labels_before, labels_after);

    let bad = SimProfile {
        silence_prob: 2.0,
        ..p
    };
    assert_eq!(simulate(client, ex, &bad, 1).await.unwrap_err().code, "invalid-profile");
    assert_eq!(
        simulate(client, pausepoint_core::ExerciseId(999), &p, 1).await.unwrap_err().code,
        "unknown-exercise"
    );
    local.close().await.unwrap();
}
