//! Request and response bodies shared by the HTTP service and its client.

use serde::{Deserialize, Serialize};

use crate::ids::{ExerciseId, ResponseId, SessionToken, UserId};
use crate::model::RecordingDescriptor;
use crate::platform::{Principal, Role};
use crate::session::{Ratings, RecordingSession, ResponseBundle};

/// Body of every non-2xx reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateLessonRequest {
    pub title: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StartSessionRequest {
    /// Session to discard in favor of the new one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerecord: Option<SessionToken>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSessionResponse {
    pub session: RecordingSession,
    pub descriptor: RecordingDescriptor,
}

/// The `metadata` part of a multipart submission.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitMetadata {
    pub session: SessionToken,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_duration_ms: Option<u64>,
    pub ratings: Ratings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub response_id: ResponseId,
    pub exercise_id: ExerciseId,
    pub duration_ms: u64,
    pub consistency_warnings: Vec<String>,
}

impl From<&ResponseBundle> for SubmitResponse {
    fn from(b: &ResponseBundle) -> Self {
        SubmitResponse {
            response_id: b.response_id,
            exercise_id: b.exercise_id,
            duration_ms: b.duration_ms,
            consistency_warnings: b.consistency_warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrollRequest {
    pub display_name: String,
    pub role: Role,
}

/// The bearer token is only ever returned here.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrollResponse {
    pub principal: Principal,
    pub token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhoAmI {
    pub user_id: UserId,
    pub role: Role,
    pub display_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessingStatus {
    pub exercise_id: ExerciseId,
    pub total: usize,
    pub processed: usize,
}
