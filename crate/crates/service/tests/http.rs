use std::fs;
use std::io::Cursor;

use axum::http::StatusCode;
use pausepoint_core::model::{BackgroundImage, ExerciseDraft};
use pausepoint_core::platform::SegmentDraft;
use pausepoint_core::store::BlobRef;
use pausepoint_core::Lesson;
use pausepoint_service::{bind, status_for, RunningService, ServeError, Service, ServiceConfig, IMAGE_CAP};
use serde_json::{json, Value};
use tempfile::TempDir;

const TOKEN: &str = "t-secret";

fn config(dir: &TempDir) -> ServiceConfig {
    let tokens = dir.path().join("tokens.json");
    fs::write(
        &tokens,
        format!(r#"{{"{TOKEN}": {{"user_id": "t1", "role": "teacher", "display_name": "Ada"}}}}"#),
    )
    .unwrap();
    let mut c = ServiceConfig::new(dir.path());
    c.auth_tokens = Some(tokens);
    c
}

async fn start(dir: &TempDir) -> RunningService {
    let service = Service::from_config(&config(dir)).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    RunningService::start(service, listener).await.unwrap()
}

fn png(w: u32, h: u32) -> Vec<u8> {
    let img = image::RgbaImage::from_pixel(w, h, image::Rgba([10, 200, 30, 255]));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

async fn error_code(resp: reqwest::Response) -> (u16, String) {
    let status = resp.status().as_u16();
    let body: Value = resp.json().await.unwrap();
    (status, body["code"].as_str().unwrap().to_string())
}

#[test]
fn config_file_parsing() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("data")).unwrap();
    let path = dir.path().join("svc.toml");
    fs::write(&path, "port = 9001\ndata_dir = \"data\"\nauth_tokens = \"tokens.json\"\n").unwrap();
    let c = ServiceConfig::load(&path).unwrap();
    assert_eq!(c.port, 9001);
    assert_eq!(c.data_dir, dir.path().join("data"));
    assert_eq!(c.auth_tokens, Some(dir.path().join("tokens.json")));
    c.check().unwrap();

    fs::write(&path, "data_dir = \"data\"\ncolour = \"blue\"\n").unwrap();
    assert_eq!(ServiceConfig::load(&path).unwrap_err().code(), "bad-config");
    fs::write(&path, "data_dir = \"nowhere\"\n").unwrap();
    assert_eq!(ServiceConfig::load(&path).unwrap().check().unwrap_err().code(), "bad-config");
    assert_eq!(
        ServiceConfig::load(&dir.path().join("absent.toml")).unwrap_err().code(),
        "bad-config"
    );
}

#[test]
fn status_table() {
    for (code, status) in [
        ("forbidden-role", 403),
        ("unknown-exercise", 404),
        ("unpublished", 404),
        ("duplicate-submission", 409),
        ("not-yet-processed", 409),
        ("unknown-sort-key", 400),
        ("over-limit", 422),
        ("malformed-artifact", 422),
        ("storage-full", 507),
    ] {
        assert_eq!(status_for(code).as_u16(), status, "{code}");
    }
}

#[tokio::test]
async fn port_in_use_and_store_locked() {
    let dir = tempfile::tempdir().unwrap();
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut c = config(&dir);
    c.port = taken.local_addr().unwrap().port();
    assert_eq!(bind(&c).await.unwrap_err().code(), "port-in-use");

    let _first = Service::from_config(&c).unwrap();
    match Service::from_config(&c) {
        Err(e @ ServeError::Store(_)) => assert_eq!(e.code(), "store-locked"),
        Err(e) => panic!("unexpected {e}"),
        Ok(_) => panic!("second service opened a locked store"),
    }
}

#[tokio::test]
async fn missing_or_unknown_token_is_401() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(&dir).await;
    let http = reqwest::Client::new();
    let url = format!("{}/lessons", server.base_url());
    assert_eq!(error_code(http.get(&url).send().await.unwrap()).await, (401, "unauthenticated".into()));
    let resp = http.get(&url).bearer_auth("guess").send().await.unwrap();
    assert_eq!(error_code(resp).await, (401, "unauthenticated".into()));
    let resp = http.get(&url).bearer_auth(TOKEN).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let health = http.get(format!("{}/healthz", server.base_url())).send().await.unwrap();
    assert!(health.status().is_success());
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn blob_upload_limits_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(&dir).await;
    let http = reqwest::Client::new();
    let url = format!("{}/blobs", server.base_url());

    let ok: BlobRef = http
        .post(&url)
        .query(&[("media_type", "png")])
        .bearer_auth(TOKEN)
        .body(png(4, 4))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(ok.media_type, pausepoint_core::store::MediaType::Png);
    assert_eq!(ok.hash.len(), 64);

    let resp = http
        .post(&url)
        .query(&[("media_type", "png")])
        .bearer_auth(TOKEN)
        .body(vec![0u8; IMAGE_CAP + 1])
        .send()
        .await
        .unwrap();
    assert_eq!(error_code(resp).await, (413, "payload-too-large".into()));

    let resp = http
        .post(&url)
        .query(&[("media_type", "gif")])
        .bearer_auth(TOKEN)
        .body(vec![1, 2, 3])
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    let resp = http
        .get(format!("{url}/{}", "0".repeat(64)))
        .bearer_auth(TOKEN)
        .send()
        .await
        .unwrap();
    assert_eq!(error_code(resp).await.0, 404);
    server.shutdown().await.unwrap();
}

async fn image_host() -> (String, tokio::task::JoinHandle<()>) {
    use axum::routing::get;
    let app = axum::Router::new()
        .route("/bg.png", get(|| async { png(32, 16) }))
        .route("/text", get(|| async { "not an image" }));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    (base, tokio::spawn(async move { axum::serve(listener, app).await.unwrap() }))
}

async fn lesson_with_background(server: &RunningService, url: &str) -> Lesson {
    let http = reqwest::Client::new();
    let base = server.base_url();
    let lesson: Lesson = http
        .post(format!("{base}/lessons"))
        .bearer_auth(TOKEN)
        .json(&json!({"title": "Optics"}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let video: BlobRef = http
        .post(format!("{base}/blobs"))
        .query(&[("media_type", "video")])
        .bearer_auth(TOKEN)
        .body(b"frames".to_vec())
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    for segment in [
        SegmentDraft::Video {
            blob: video.hash,
            duration_ms: Some(10_000),
        },
        SegmentDraft::Exercise(ExerciseDraft {
            instructions: "Trace the ray".into(),
            time_limit_s: 30,
            input_mode: "ink".into(),
            background: Some(BackgroundImage::Url(url.to_string())),
            student_gallery_access: None,
        }),
    ] {
        let resp = http
            .post(format!("{base}/lessons/{}/segments", lesson.lesson_id))
            .bearer_auth(TOKEN)
            .json(&segment)
            .send()
            .await
            .unwrap();
        assert!(resp.status().is_success(), "{}", resp.text().await.unwrap());
    }
    lesson
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn publish_snapshots_remote_backgrounds() {
    let (host, host_task) = image_host().await;
    let dir = tempfile::tempdir().unwrap();
    let server = start(&dir).await;
    let http = reqwest::Client::new();
    let base = server.base_url();

    let lesson = lesson_with_background(&server, &format!("{host}/bg.png")).await;
    let published: Lesson = http
        .post(format!("{base}/lessons/{}/publish", lesson.lesson_id))
        .bearer_auth(TOKEN)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(published.published);
    let spec = published.exercises().next().unwrap();
    let Some(BackgroundImage::Blob(blob)) = &spec.background_image else {
        panic!("background was not snapshotted: {:?}", spec.background_image);
    };
    let resp = http
        .get(format!("{base}/blobs/{}", blob.hash))
        .bearer_auth(TOKEN)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()["content-type"], "image/png");
    assert_eq!(resp.bytes().await.unwrap().to_vec(), png(32, 16));

    for path in ["text", "missing.png"] {
        let lesson = lesson_with_background(&server, &format!("{host}/{path}")).await;
        let resp = http
            .post(format!("{base}/lessons/{}/publish", lesson.lesson_id))
            .bearer_auth(TOKEN)
            .send()
            .await
            .unwrap();
        assert_eq!(error_code(resp).await, (422, "background-unavailable".into()));
    }
    host_task.abort();
    server.shutdown().await.unwrap();
}
