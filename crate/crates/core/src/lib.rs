//! Core of the lecture-video exercise platform: lesson timelines, the ink
//! event format, response post-processing, recording sessions, the review
//! gallery, and durable storage.

pub mod ids;
pub mod ink;
pub mod media;
pub mod model;
pub mod store;
pub mod error;
pub mod platform;
pub mod session;
pub mod gallery;
pub mod api;

pub use error::{Error, Result};
pub use gallery::{
    Annotation, AnnotationDraft, AnnotationKind, GalleryCard, GalleryQuery, PlaybackManifest, ReviewFilter,
    SortDirection, SortKey,
};
pub use ids::{AnnotationId, ExerciseId, LessonId, ResponseId, SessionToken, UserId};
pub use model::{ExerciseDraft, ExerciseSpec, InputMode, Lesson, Modality};
pub use platform::{Platform, PlatformConfig, Principal, Role, SegmentDraft};
pub use session::{Ratings, ResponseBundle, Submission};
pub use store::{BlobRef, MediaType, Store};
