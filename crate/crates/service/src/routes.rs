use std::collections::HashMap;

use axum::body::Bytes;
use axum::extract::multipart::Field;
use axum::extract::{DefaultBodyLimit, FromRequestParts, Multipart, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pausepoint_core::api::{
    CreateLessonRequest, EnrollRequest, EnrollResponse, ProcessingStatus, StartSessionRequest, StartSessionResponse,
    SubmitMetadata, SubmitResponse, WhoAmI,
};
use pausepoint_core::gallery::{AnnotationDraft, GalleryQuery};
use pausepoint_core::model::BackgroundImage;
use pausepoint_core::platform::SegmentDraft;
use pausepoint_core::session::Submission;
use pausepoint_core::store::MediaType;
use pausepoint_core::{ExerciseId, LessonId, Platform, Principal, ResponseId, Role};
use serde::Deserialize;
use tokio::sync::OwnedSemaphorePermit;

use crate::auth::{generate_token, token_digest};
use crate::error::ApiError;
use crate::AppState;

pub const INK_CAP: usize = 5 * 1024 * 1024;
pub const AUDIO_CAP: usize = 50 * 1024 * 1024;
pub const VIDEO_CAP: usize = 200 * 1024 * 1024;
pub const POSTER_CAP: usize = 2 * 1024 * 1024;
const METADATA_CAP: usize = 64 * 1024;
pub const IMAGE_CAP: usize = 20 * 1024 * 1024;
const SUBMISSION_BODY_LIMIT: usize = INK_CAP + AUDIO_CAP + VIDEO_CAP + POSTER_CAP + 1024 * 1024;
const PERMIT_UNIT: usize = 1024;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/whoami", get(whoami))
        .route("/principals", post(enroll))
        .route("/blobs", post(upload_blob).layer(DefaultBodyLimit::max(VIDEO_CAP + 1024)))
        .route("/blobs/{hash}", get(fetch_blob))
        .route("/lessons", get(list_lessons).post(create_lesson))
        .route("/lessons/{id}", get(get_lesson))
        .route("/lessons/{id}/segments", post(add_segment))
        .route("/lessons/{id}/publish", post(publish_lesson))
        .route("/lessons/{id}/timeline", get(timeline))
        .route("/exercises/{id}", get(preview))
        .route("/exercises/{id}/sessions", post(start_session))
        .route(
            "/exercises/{id}/responses",
            post(submit).layer(DefaultBodyLimit::max(SUBMISSION_BODY_LIMIT)),
        )
        .route("/exercises/{id}/gallery", get(gallery))
        .route("/exercises/{id}/status", get(status))
        .route("/exercises/{id}/reprocess", post(reprocess))
        .route("/responses/{id}/manifest", get(manifest))
        .route("/responses/{id}/review", post(review))
        .route("/responses/{id}/annotations", get(annotations).post(annotate))
        .with_state(state)
}

/// The authenticated caller.
pub struct Authed(pub Principal);

impl FromRequestParts<AppState> for Authed {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let value = parts
            .headers
            .get(header::AUTHORIZATION)
            .ok_or_else(|| ApiError::unauthenticated("missing bearer token"))?;
        let token = value
            .to_str()
            .ok()
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(|| ApiError::unauthenticated("malformed authorization header"))?;
        state
            .auth
            .authenticate(token.trim())
            .map(Authed)
            .ok_or_else(|| ApiError::unauthenticated("unknown token"))
    }
}

/// Run a platform call on the blocking pool.
async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Platform) -> pausepoint_core::Result<T> + Send + 'static,
{
    let platform = state.platform.clone();
    tokio::task::spawn_blocking(move || f(&platform))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
}

async fn whoami(Authed(p): Authed) -> Json<WhoAmI> {
    Json(WhoAmI {
        user_id: p.user_id,
        role: p.role,
        display_name: p.display_name,
    })
}

async fn enroll(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Json(req): Json<EnrollRequest>,
) -> Result<(StatusCode, Json<EnrollResponse>), ApiError> {
    let token = generate_token();
    let digest = token_digest(&token);
    let d = digest.clone();
    let principal = blocking(&state, move |p| p.enroll(&actor, req.role, &req.display_name, &d)).await?;
    state.auth.insert_digest(digest, principal.clone());
    Ok((StatusCode::CREATED, Json(EnrollResponse { principal, token })))
}

#[derive(Deserialize)]
struct UploadQuery {
    media_type: String,
}

fn blob_cap(media_type: MediaType) -> usize {
    match media_type {
        MediaType::InkJson => INK_CAP,
        MediaType::Wav => AUDIO_CAP,
        MediaType::Video => VIDEO_CAP,
        MediaType::Png | MediaType::Jpeg => IMAGE_CAP,
    }
}

async fn upload_blob(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Query(q): Query<UploadQuery>,
    body: Bytes,
) -> Result<(StatusCode, Json<pausepoint_core::BlobRef>), ApiError> {
    if actor.role != Role::Teacher {
        return Err(pausepoint_core::Error::ForbiddenRole("only teachers upload lesson media".into()).into());
    }
    let media_type: MediaType = q
        .media_type
        .parse()
        .map_err(|_| ApiError::bad_request(format!("unknown media type {:?}", q.media_type)))?;
    if body.len() > blob_cap(media_type) {
        return Err(ApiError::too_large(format!("{} bytes exceed the {media_type} cap", body.len())));
    }
    let r = blocking(&state, move |p| Ok(p.store().put_blob(&body, media_type)?)).await?;
    Ok((StatusCode::CREATED, Json(r)))
}

async fn fetch_blob(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(hash): Path<String>,
) -> Result<Response, ApiError> {
    let (blob, bytes) = blocking(&state, move |p| {
        if !p.can_read_blob(&actor, &hash)? {
            return Err(pausepoint_core::Error::ForbiddenRole(format!("no access to blob {hash}")));
        }
        Ok(p.store().read_blob(&hash)?)
    })
    .await?;
    Ok((
        [
            (header::CONTENT_TYPE, blob.media_type.mime()),
            (header::CACHE_CONTROL, "private, max-age=31536000, immutable"),
        ],
        bytes,
    )
        .into_response())
}

async fn list_lessons(
    State(state): State<AppState>,
    Authed(actor): Authed,
) -> Result<Json<Vec<pausepoint_core::Lesson>>, ApiError> {
    let lessons = blocking(&state, move |p| {
        Ok(p.lessons()?
            .into_iter()
            .filter(|l| l.published || l.owner == actor.user_id)
            .collect())
    })
    .await?;
    Ok(Json(lessons))
}

async fn create_lesson(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Json(req): Json<CreateLessonRequest>,
) -> Result<(StatusCode, Json<pausepoint_core::Lesson>), ApiError> {
    let lesson = blocking(&state, move |p| p.create_lesson(&actor, &req.title)).await?;
    Ok((StatusCode::CREATED, Json(lesson)))
}

async fn get_lesson(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<LessonId>,
) -> Result<Json<pausepoint_core::Lesson>, ApiError> {
    Ok(Json(blocking(&state, move |p| p.lesson(&actor, id)).await?))
}

async fn add_segment(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<LessonId>,
    Json(draft): Json<SegmentDraft>,
) -> Result<Json<pausepoint_core::Lesson>, ApiError> {
    Ok(Json(blocking(&state, move |p| p.add_segment(&actor, id, &draft)).await?))
}

async fn fetch_remote(client: &reqwest::Client, url: &str) -> Result<Vec<u8>, String> {
    let mut resp = client
        .get(url)
        .send()
        .await
        .and_then(|r| r.error_for_status())
        .map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    while let Some(chunk) = resp.chunk().await.map_err(|e| e.to_string())? {
        out.extend_from_slice(&chunk);
        if out.len() > IMAGE_CAP {
            return Err(format!("image larger than {IMAGE_CAP} bytes"));
        }
    }
    Ok(out)
}

async fn publish_lesson(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<LessonId>,
) -> Result<Json<pausepoint_core::Lesson>, ApiError> {
    let a = actor.clone();
    let lesson = blocking(&state, move |p| p.lesson(&a, id)).await?;
    let mut fetched: HashMap<String, Result<Vec<u8>, String>> = HashMap::new();
    if lesson.owner == actor.user_id && !lesson.published {
        for spec in lesson.exercises() {
            if let Some(BackgroundImage::Url(url)) = &spec.background_image {
                if !fetched.contains_key(url) {
                    let result = fetch_remote(&state.http, url).await;
                    fetched.insert(url.clone(), result);
                }
            }
        }
    }
    Ok(Json(blocking(&state, move |p| p.publish_lesson(&actor, id, &fetched)).await?))
}

async fn timeline(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<LessonId>,
) -> Result<Json<pausepoint_core::platform::TimelineView>, ApiError> {
    Ok(Json(blocking(&state, move |p| p.timeline(&actor, id)).await?))
}

async fn preview(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<ExerciseId>,
) -> Result<Json<pausepoint_core::model::RecordingDescriptor>, ApiError> {
    Ok(Json(blocking(&state, move |p| p.preview(&actor, id)).await?))
}

async fn start_session(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<ExerciseId>,
    body: Option<Json<StartSessionRequest>>,
) -> Result<(StatusCode, Json<StartSessionResponse>), ApiError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let (session, descriptor) = blocking(&state, move |p| match &req.rerecord {
        Some(old) => {
            let current = p.session(old)?;
            if current.exercise_id != id {
                return Err(pausepoint_core::Error::SessionNotOwned);
            }
            p.discard_and_rerecord(&actor, old)
        }
        None => p.start_session(&actor, id),
    })
    .await?;
    Ok((StatusCode::CREATED, Json(StartSessionResponse { session, descriptor })))
}

struct PartReader {
    permits: Option<OwnedSemaphorePermit>,
}

impl PartReader {
    async fn read(&mut self, state: &AppState, field: &mut Field<'_>, name: &str, cap: usize) -> Result<Vec<u8>, ApiError> {
        let mut buf = Vec::new();
        while let Some(chunk) = field.chunk().await.map_err(multipart_error)? {
            if buf.len() + chunk.len() > cap {
                return Err(ApiError::too_large(format!("{name} part exceeds {cap} bytes")));
            }
            let units = chunk.len().div_ceil(PERMIT_UNIT) as u32;
            let permit = state
                .upload_gate
                .clone()
                .acquire_many_owned(units.min(state.upload_units))
                .await
                .map_err(|e| ApiError::internal(e.to_string()))?;
            match &mut self.permits {
                Some(p) => p.merge(permit),
                None => self.permits = Some(permit),
            }
            buf.extend_from_slice(&chunk);
        }
        Ok(buf)
    }
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::too_large(e.body_text())
    } else {
        ApiError::malformed(e.body_text())
    }
}

async fn submit(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<ExerciseId>,
    mut multipart: Multipart,
) -> Result<(StatusCode, Json<SubmitResponse>), ApiError> {
    let mut reader = PartReader { permits: None };
    let mut metadata: Option<SubmitMetadata> = None;
    let mut sub = Submission::default();
    while let Some(mut field) = multipart.next_field().await.map_err(multipart_error)? {
        let name = field.name().unwrap_or_default().to_string();
        let (slot, cap) = match name.as_str() {
            "metadata" => (None, METADATA_CAP),
            "ink" => (Some(&mut sub.ink), INK_CAP),
            "audio" => (Some(&mut sub.audio), AUDIO_CAP),
            "video" => (Some(&mut sub.video), VIDEO_CAP),
            "poster" => (Some(&mut sub.poster), POSTER_CAP),
            other => return Err(ApiError::malformed(format!("unexpected part {other:?}"))),
        };
        let bytes = reader.read(&state, &mut field, &name, cap).await?;
        match slot {
            Some(slot) if slot.is_some() => return Err(ApiError::malformed(format!("duplicate {name} part"))),
            Some(slot) => *slot = Some(bytes),
            None if metadata.is_some() => return Err(ApiError::malformed("duplicate metadata part")),
            None => {
                metadata = Some(
                    serde_json::from_slice(&bytes)
                        .map_err(|e| ApiError::malformed(format!("metadata: {e}")))?,
                )
            }
        }
    }
    let metadata = metadata.ok_or_else(|| ApiError::malformed("missing metadata part"))?;
    sub.declared_duration_ms = metadata.declared_duration_ms;
    sub.ratings = Some(metadata.ratings);
    let bundle = blocking(&state, move |p| p.submit(&actor, id, &metadata.session, sub)).await?;
    drop(reader);
    state.enqueue(bundle.response_id);
    Ok((StatusCode::CREATED, Json(SubmitResponse::from(&bundle))))
}

#[derive(Deserialize)]
struct GalleryParams {
    sort: Option<String>,
    dir: Option<String>,
    mode: Option<String>,
    review: Option<String>,
}

async fn gallery(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<ExerciseId>,
    Query(q): Query<GalleryParams>,
) -> Result<Json<Vec<pausepoint_core::GalleryCard>>, ApiError> {
    let query = GalleryQuery::parse(q.sort.as_deref(), q.dir.as_deref(), q.mode.as_deref(), q.review.as_deref())?;
    Ok(Json(blocking(&state, move |p| p.list_responses(&actor, id, &query)).await?))
}

async fn status(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<ExerciseId>,
) -> Result<Json<ProcessingStatus>, ApiError> {
    let s = blocking(&state, move |p| {
        p.owned_exercise(&actor, id)?;
        let all = p.responses_for(id)?;
        Ok(ProcessingStatus {
            exercise_id: id,
            total: all.len(),
            processed: all.iter().filter(|b| b.processed).count(),
        })
    })
    .await?;
    Ok(Json(s))
}

async fn reprocess(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<ExerciseId>,
) -> Result<Json<pausepoint_core::session::ReprocessReport>, ApiError> {
    Ok(Json(
        blocking(&state, move |p| {
            p.owned_exercise(&actor, id)?;
            p.reprocess(id)
        })
        .await?,
    ))
}

async fn manifest(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<ResponseId>,
) -> Result<Json<pausepoint_core::PlaybackManifest>, ApiError> {
    Ok(Json(blocking(&state, move |p| p.playback_manifest(&actor, id)).await?))
}

async fn review(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<ResponseId>,
) -> Result<Json<pausepoint_core::gallery::ReviewState>, ApiError> {
    Ok(Json(blocking(&state, move |p| p.mark_reviewed(&actor, id)).await?))
}

async fn annotations(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<ResponseId>,
) -> Result<Json<Vec<pausepoint_core::Annotation>>, ApiError> {
    Ok(Json(blocking(&state, move |p| p.annotations(&actor, id)).await?))
}

async fn annotate(
    State(state): State<AppState>,
    Authed(actor): Authed,
    Path(id): Path<ResponseId>,
    Json(draft): Json<AnnotationDraft>,
) -> Result<(StatusCode, Json<pausepoint_core::Annotation>), ApiError> {
    let a = blocking(&state, move |p| p.add_annotation(&actor, id, &draft)).await?;
    Ok((StatusCode::CREATED, Json(a)))
}
