//! Typed async client for the pausepoint service.

use pausepoint_core::api::{
    CreateLessonRequest, EnrollRequest, EnrollResponse, ErrorBody, ProcessingStatus, StartSessionRequest,
    StartSessionResponse, SubmitMetadata, SubmitResponse, WhoAmI,
};
use pausepoint_core::gallery::{
    Annotation, AnnotationDraft, GalleryCard, GalleryQuery, PlaybackManifest, ReviewFilter, ReviewState, SortDirection,
};
use pausepoint_core::model::RecordingDescriptor;
use pausepoint_core::platform::{SegmentDraft, TimelineView};
use pausepoint_core::session::ReprocessReport;
use pausepoint_core::store::{BlobRef, MediaType};
use pausepoint_core::{ExerciseId, Lesson, LessonId, ResponseId, Role, SessionToken};
use reqwest::multipart::{Form, Part};
use reqwest::{Method, RequestBuilder, Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{status} {code}: {detail}")]
    Api {
        status: StatusCode,
        code: String,
        detail: String,
    },
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    /// The service error code, or a transport class.
    pub fn code(&self) -> &str {
        match self {
            ClientError::Api { code, .. } => code,
            ClientError::Transport(_) => "transport-error",
            ClientError::Decode(_) => "decode-error",
        }
    }
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

/// Artifact parts of a submission.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub ink: Option<Vec<u8>>,
    pub audio: Option<Vec<u8>>,
    pub video: Option<Vec<u8>>,
    pub poster: Option<(Vec<u8>, MediaType)>,
}

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
    token: String,
}

fn direction(d: SortDirection) -> &'static str {
    match d {
        SortDirection::Asc => "asc",
        SortDirection::Desc => "desc",
    }
}

fn review(r: ReviewFilter) -> &'static str {
    match r {
        ReviewFilter::Reviewed => "reviewed",
        ReviewFilter::NotReviewed => "not-reviewed",
    }
}

/// Query-string pairs for a gallery query.
pub fn gallery_params(q: &GalleryQuery) -> Vec<(&'static str, &'static str)> {
    let mut params = vec![("sort", q.sort.as_str()), ("dir", direction(q.direction))];
    if let Some(m) = q.mode_present {
        params.push(("mode", m.as_str()));
    }
    if let Some(r) = q.review_status {
        params.push(("review", review(r)));
    }
    params
}

impl Client {
    pub fn new(base_url: impl Into<String>, token: impl Into<String>) -> Self {
        Self::with_http(reqwest::Client::new(), base_url, token)
    }

    /// Share one connection pool between several principals.
    pub fn with_http(http: reqwest::Client, base_url: impl Into<String>, token: impl Into<String>) -> Self {
        Client {
            http,
            base: base_url.into().trim_end_matches('/').to_string(),
            token: token.into(),
        }
    }

    /// Same server and pool, another principal.
    pub fn as_user(&self, token: impl Into<String>) -> Self {
        Self::with_http(self.http.clone(), self.base.clone(), token)
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        self.http
            .request(method, format!("{}{}", self.base, path))
            .bearer_auth(&self.token)
    }

    async fn check(resp: Response) -> Result<Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let bytes = resp.bytes().await?;
        match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => Err(ClientError::Api {
                status,
                code: body.code,
                detail: body.detail,
            }),
            Err(_) => Err(ClientError::Api {
                status,
                code: format!("http-{}", status.as_u16()),
                detail: String::from_utf8_lossy(&bytes).into_owned(),
            }),
        }
    }

    async fn json<T: DeserializeOwned>(rb: RequestBuilder) -> Result<T> {
        let resp = Self::check(rb.send().await?).await?;
        let bytes = resp.bytes().await?;
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Self::json(self.request(Method::GET, path)).await
    }

    async fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Self::json(self.request(Method::POST, path).json(body)).await
    }

    pub async fn whoami(&self) -> Result<WhoAmI> {
        self.get("/whoami").await
    }

    pub async fn enroll(&self, role: Role, display_name: &str) -> Result<EnrollResponse> {
        self.post(
            "/principals",
            &EnrollRequest {
                display_name: display_name.to_string(),
                role,
            },
        )
        .await
    }

    pub async fn upload_blob(&self, bytes: Vec<u8>, media_type: MediaType) -> Result<BlobRef> {
        Self::json(
            self.request(Method::POST, "/blobs")
                .query(&[("media_type", media_type.as_str())])
                .body(bytes),
        )
        .await
    }

    /// Blob bytes and their content type.
    pub async fn fetch_blob(&self, hash: &str) -> Result<(String, Vec<u8>)> {
        let resp = Self::check(self.request(Method::GET, &format!("/blobs/{hash}")).send().await?).await?;
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or_default()
            .to_string();
        Ok((content_type, resp.bytes().await?.to_vec()))
    }

    pub async fn lessons(&self) -> Result<Vec<Lesson>> {
        self.get("/lessons").await
    }

    pub async fn create_lesson(&self, title: &str) -> Result<Lesson> {
        self.post("/lessons", &CreateLessonRequest { title: title.to_string() })
            .await
    }

    pub async fn lesson(&self, id: LessonId) -> Result<Lesson> {
        self.get(&format!("/lessons/{id}")).await
    }

    pub async fn add_segment(&self, id: LessonId, draft: &SegmentDraft) -> Result<Lesson> {
        self.post(&format!("/lessons/{id}/segments"), draft).await
    }

    pub async fn publish(&self, id: LessonId) -> Result<Lesson> {
        Self::json(self.request(Method::POST, &format!("/lessons/{id}/publish"))).await
    }

    pub async fn timeline(&self, id: LessonId) -> Result<TimelineView> {
        self.get(&format!("/lessons/{id}/timeline")).await
    }

    /// Raw timeline body, for byte-level comparisons.
    pub async fn timeline_bytes(&self, id: LessonId) -> Result<Vec<u8>> {
        let resp = Self::check(self.request(Method::GET, &format!("/lessons/{id}/timeline")).send().await?).await?;
        Ok(resp.bytes().await?.to_vec())
    }

    pub async fn preview(&self, id: ExerciseId) -> Result<RecordingDescriptor> {
        self.get(&format!("/exercises/{id}")).await
    }

    pub async fn start_session(&self, id: ExerciseId) -> Result<StartSessionResponse> {
        self.post(&format!("/exercises/{id}/sessions"), &StartSessionRequest::default())
            .await
    }

    pub async fn rerecord(&self, id: ExerciseId, session: &SessionToken) -> Result<StartSessionResponse> {
        self.post(
            &format!("/exercises/{id}/sessions"),
            &StartSessionRequest {
                rerecord: Some(session.clone()),
            },
        )
        .await
    }

    pub async fn submit(&self, id: ExerciseId, metadata: &SubmitMetadata, artifacts: Artifacts) -> Result<SubmitResponse> {
        let meta = serde_json::to_vec(metadata).map_err(|e| ClientError::Decode(e.to_string()))?;
        let mut form = Form::new().part("metadata", Part::bytes(meta).mime_str("application/json")?);
        if let Some(ink) = artifacts.ink {
            form = form.part("ink", Part::bytes(ink).mime_str(MediaType::InkJson.mime())?);
        }
        if let Some(audio) = artifacts.audio {
            form = form.part("audio", Part::bytes(audio).mime_str(MediaType::Wav.mime())?);
        }
        if let Some(video) = artifacts.video {
            form = form.part("video", Part::bytes(video).mime_str(MediaType::Video.mime())?);
        }
        if let Some((poster, media_type)) = artifacts.poster {
            form = form.part("poster", Part::bytes(poster).mime_str(media_type.mime())?);
        }
        self.submit_form(id, form).await
    }

    /// Submit a hand-built multipart form.
    pub async fn submit_form(&self, id: ExerciseId, form: Form) -> Result<SubmitResponse> {
        Self::json(self.request(Method::POST, &format!("/exercises/{id}/responses")).multipart(form)).await
    }

    pub async fn gallery(&self, id: ExerciseId, query: &GalleryQuery) -> Result<Vec<GalleryCard>> {
        Self::json(
            self.request(Method::GET, &format!("/exercises/{id}/gallery"))
                .query(&gallery_params(query)),
        )
        .await
    }

    /// Gallery with raw query parameters.
    pub async fn gallery_raw(&self, id: ExerciseId, params: &[(&str, &str)]) -> Result<Vec<GalleryCard>> {
        Self::json(self.request(Method::GET, &format!("/exercises/{id}/gallery")).query(params)).await
    }

    pub async fn status(&self, id: ExerciseId) -> Result<ProcessingStatus> {
        self.get(&format!("/exercises/{id}/status")).await
    }

    pub async fn reprocess(&self, id: ExerciseId) -> Result<ReprocessReport> {
        Self::json(self.request(Method::POST, &format!("/exercises/{id}/reprocess"))).await
    }

    pub async fn manifest(&self, id: ResponseId) -> Result<PlaybackManifest> {
        self.get(&format!("/responses/{id}/manifest")).await
    }

    pub async fn mark_reviewed(&self, id: ResponseId) -> Result<ReviewState> {
        Self::json(self.request(Method::POST, &format!("/responses/{id}/review"))).await
    }

    pub async fn annotations(&self, id: ResponseId) -> Result<Vec<Annotation>> {
        self.get(&format!("/responses/{id}/annotations")).await
    }

    pub async fn annotate(&self, id: ResponseId, draft: &AnnotationDraft) -> Result<Annotation> {
        self.post(&format!("/responses/{id}/annotations"), draft).await
    }
}
