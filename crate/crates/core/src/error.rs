use thiserror::Error;

use crate::ids::{ExerciseId, LessonId, ResponseId};
use crate::model::{TimelineError, Violation};
use crate::store::StoreError;

/// Errors from platform operations. [`Error::code`] is the machine-readable
/// vocabulary shared with the wire protocol.
#[derive(Debug, Error)]
pub enum Error {
    #[error("forbidden: {0}")]
    ForbiddenRole(String),
    #[error("unknown lesson {0}")]
    UnknownLesson(LessonId),
    #[error("unknown exercise {0}")]
    UnknownExercise(ExerciseId),
    #[error("unknown response {0}")]
    UnknownResponse(ResponseId),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown user {0}")]
    UnknownPrincipal(String),
    #[error("lesson {0} is published and cannot change")]
    LessonPublished(LessonId),
    #[error("lesson {0} is not published")]
    Unpublished(LessonId),
    #[error("the lesson containing this exercise is not published")]
    LessonUnpublished(LessonId),
    #[error("lesson title is empty")]
    EmptyTitle,
    #[error("display name is empty")]
    EmptyDisplayName,
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error("invalid exercise: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("session is no longer open")]
    SessionTerminal,
    #[error("session belongs to another student or exercise")]
    SessionNotOwned,
    #[error("response lasts {duration_ms} ms; the limit with grace is {allowed_ms} ms")]
    OverLimit { duration_ms: u64, allowed_ms: u64 },
    #[error("invalid rating: {0}")]
    InvalidRating(String),
    #[error("malformed artifact: {0}")]
    MalformedArtifact(String),
    #[error("artifact not enabled by the exercise mode: {0}")]
    ModeMismatch(String),
    #[error("this student already submitted a response to the exercise")]
    DuplicateSubmission,
    #[error("response {0} has not been post-processed yet")]
    NotYetProcessed(ResponseId),
    #[error("comment body is empty")]
    EmptyComment,
    #[error("bad reply parent: {0}")]
    BadParent(String),
    #[error("likes carry no body or parent")]
    LikeWithBody,
    #[error("unknown sort key {0:?}")]
    UnknownSortKey(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("artifact unreadable: {0}")]
    ArtifactUnreadable(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn join(violations: &[Violation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::ForbiddenRole(_) => "forbidden-role",
            Error::UnknownLesson(_) => "unknown-lesson",
            Error::UnknownExercise(_) => "unknown-exercise",
            Error::UnknownResponse(_) => "unknown-response",
            Error::UnknownSession(_) => "unknown-session",
            Error::UnknownPrincipal(_) => "unknown-user",
            Error::LessonPublished(_) => "lesson-published",
            Error::Unpublished(_) => "unpublished",
            Error::LessonUnpublished(_) => "lesson-unpublished",
            Error::EmptyTitle => "empty-title",
            Error::EmptyDisplayName => "empty-display-name",
            Error::Timeline(e) => e.code(),
            Error::Invalid(v) => v.first().map(Violation::code).unwrap_or("invalid-spec"),
            Error::InvalidSegment(_) => "invalid-segment",
            Error::SessionTerminal => "session-terminal",
            Error::SessionNotOwned => "session-not-owned",
            Error::OverLimit { .. } => "over-limit",
            Error::InvalidRating(_) => "invalid-rating",
            Error::MalformedArtifact(_) => "malformed-artifact",
            Error::ModeMismatch(_) => "mode-mismatch",
            Error::DuplicateSubmission => "duplicate-submission",
            Error::NotYetProcessed(_) => "not-yet-processed",
            Error::EmptyComment => "empty-comment",
            Error::BadParent(_) => "bad-parent",
            Error::LikeWithBody => "like-with-body",
            Error::UnknownSortKey(_) => "unknown-sort-key",
            Error::InvalidQuery(_) => "invalid-query",
            Error::ArtifactUnreadable(_) => "artifact-unreadable",
            Error::Store(e) => match e {
                StoreError::StorageFull => "storage-full",
                StoreError::EmptyContent => "empty-content",
                StoreError::VersionConflict { .. } => "version-conflict",
                StoreError::MissingBlob(_) => "missing-blob",
                StoreError::BlobNotFound(_) | StoreError::InvalidHash(_) => "unknown-blob",
                _ => "internal",
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
