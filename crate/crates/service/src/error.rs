use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pausepoint_core::api::ErrorBody;
use pausepoint_core::Error;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            detail: detail.into(),
        }
    }

    pub fn unauthenticated(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthenticated", detail)
    }

    pub fn malformed(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed-artifact", detail)
    }

    pub fn too_large(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::PAYLOAD_TOO_LARGE, "payload-too-large", detail)
    }

    pub fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", detail)
    }

    pub fn internal(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", detail)
    }
}

/// Transport status for a platform error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "forbidden-role" | "session-not-owned" => StatusCode::FORBIDDEN,
        "unknown-lesson" | "unknown-exercise" | "unknown-response" | "unknown-session" | "unknown-user"
        | "unknown-blob" | "unpublished" | "lesson-unpublished" => StatusCode::NOT_FOUND,
        "lesson-published" | "session-terminal" | "duplicate-submission" | "version-conflict"
        | "not-yet-processed" => StatusCode::CONFLICT,
        "unknown-sort-key" | "invalid-query" => StatusCode::BAD_REQUEST,
        "storage-full" => StatusCode::INSUFFICIENT_STORAGE,
        "internal" | "artifact-unreadable" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = e.code();
        ApiError::new(status_for(code), code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, detail = %self.detail, "request failed");
        }
        let body = ErrorBody {
            code: self.code.to_string(),
            detail: self.detail,
        };
        (self.status, Json(body)).into_response()
    }
}
