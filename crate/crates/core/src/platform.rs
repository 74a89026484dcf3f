//! The platform facade: principals and lesson authoring on top of the store.
//! Recording sessions live in [`crate::session`] and review in
//! [`crate::gallery`]; both extend [`Platform`].
//!
//! Every operation checks the caller's role before touching the store.

use std::collections::HashMap;
use std::sync::Mutex;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ExerciseId, LessonId, UserId};
use crate::ink::Size;
use crate::media::DEFAULT_THUMBNAIL;
use crate::model::{
    build_timeline, preview_descriptor, spec_from_draft, validate_exercise, validate_exercise_offline,
    BackgroundImage, ExerciseDraft, ExerciseSpec, ImageSource, Lesson, PlaybackPlan, RecordingDescriptor,
    ResolvedBackground, Segment,
};
use crate::store::{BlobRef, MediaType, Record, RecordKind, RecordWrite, Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Teacher,
    Student,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub user_id: UserId,
    pub role: Role,
    pub display_name: String,
}

impl Principal {
    pub fn teacher(id: &str, name: &str) -> Self {
        Principal {
            user_id: id.into(),
            role: Role::Teacher,
            display_name: name.into(),
        }
    }

    pub fn student(id: &str, name: &str) -> Self {
        Principal {
            user_id: id.into(),
            role: Role::Student,
            display_name: name.into(),
        }
    }

    pub fn is_teacher(&self) -> bool {
        self.role == Role::Teacher
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct PrincipalRecord {
    pub principal: Principal,
    #[serde(default)]
    pub token_digests: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ExerciseIndex {
    pub lesson_id: LessonId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SegmentDraft {
    Video {
        blob: String,
        #[serde(default)]
        duration_ms: Option<u64>,
    },
    Exercise(ExerciseDraft),
}

/// A lesson's playback plan plus the recording view of each exercise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineView {
    pub lesson_id: LessonId,
    pub title: String,
    pub plan: PlaybackPlan,
    pub exercises: Vec<RecordingDescriptor>,
}

/// Remote image download used when publishing lessons with linked backgrounds.
pub trait RemoteImages {
    fn fetch(&self, url: &str) -> std::result::Result<Vec<u8>, String>;
}

/// Rejects every remote image.
pub struct NoRemoteImages;

impl RemoteImages for NoRemoteImages {
    fn fetch(&self, url: &str) -> std::result::Result<Vec<u8>, String> {
        Err(format!("remote images are not available here ({url})"))
    }
}

impl RemoteImages for HashMap<String, std::result::Result<Vec<u8>, String>> {
    fn fetch(&self, url: &str) -> std::result::Result<Vec<u8>, String> {
        self.get(url).cloned().unwrap_or_else(|| Err("not fetched".to_string()))
    }
}

struct StoreImages<'a> {
    store: &'a Store,
    remote: &'a dyn RemoteImages,
}

impl ImageSource for StoreImages<'_> {
    fn stored_media_type(&self, hash: &str) -> Option<MediaType> {
        self.store.blob_ref(hash).ok().flatten().map(|b| b.media_type)
    }

    fn fetch_remote(&self, url: &str) -> std::result::Result<Vec<u8>, String> {
        self.remote.fetch(url)
    }
}

#[derive(Debug, Clone)]
pub struct PlatformConfig {
    pub default_student_gallery_access: bool,
    pub thumbnail_size: Size,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            default_student_gallery_access: false,
            thumbnail_size: DEFAULT_THUMBNAIL,
        }
    }
}

pub struct Platform {
    pub(crate) store: Store,
    pub(crate) config: PlatformConfig,
    pub(crate) annotation_lock: Mutex<()>,
}

pub(crate) fn require_teacher(actor: &Principal) -> Result<()> {
    if actor.is_teacher() {
        Ok(())
    } else {
        Err(Error::ForbiddenRole(format!("{} is not a teacher", actor.user_id)))
    }
}

pub(crate) fn lesson_blobs(lesson: &Lesson) -> Vec<BlobRef> {
    lesson
        .segments
        .iter()
        .filter_map(|s| match s {
            Segment::Video { blob, .. } => Some(blob.clone()),
            Segment::Exercise(spec) => match &spec.background_image {
                Some(BackgroundImage::Blob(b)) => Some(b.clone()),
                _ => None,
            },
        })
        .collect()
}

impl Platform {
    pub fn new(store: Store, config: PlatformConfig) -> Self {
        Platform {
            store,
            config,
            annotation_lock: Mutex::new(()),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    // ---- principals ----

    /// Insert or refresh a principal; an existing user keeps its role.
    pub fn register_principal(&self, principal: &Principal, token_digest: Option<&str>) -> Result<Principal> {
        if principal.display_name.trim().is_empty() {
            return Err(Error::EmptyDisplayName);
        }
        loop {
            let existing = self.store.get(RecordKind::Principal, &principal.user_id.0);
            let (version, mut record) = match &existing {
                Some(r) => (r.version, r.decode::<PrincipalRecord>()?),
                None => (
                    0,
                    PrincipalRecord {
                        principal: principal.clone(),
                        token_digests: Vec::new(),
                    },
                ),
            };
            if record.principal.role != principal.role {
                return Err(Error::ForbiddenRole(format!(
                    "{} already exists with another role",
                    principal.user_id
                )));
            }
            let digest_known = token_digest.is_none_or(|d| record.token_digests.iter().any(|x| x == d));
            if existing.is_some() && digest_known && record.principal.display_name == principal.display_name {
                return Ok(record.principal);
            }
            record.principal.display_name = principal.display_name.clone();
            if let Some(d) = token_digest {
                if !record.token_digests.iter().any(|x| x == d) {
                    record.token_digests.push(d.to_string());
                }
            }
            let write = RecordWrite::new(RecordKind::Principal, principal.user_id.0.clone(), version, &record);
            match self.store.commit(vec![write]) {
                Ok(_) => return Ok(record.principal),
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// A teacher creates a new principal with a generated user id.
    pub fn enroll(&self, actor: &Principal, role: Role, display_name: &str, token_digest: &str) -> Result<Principal> {
        require_teacher(actor)?;
        if display_name.trim().is_empty() {
            return Err(Error::EmptyDisplayName);
        }
        let prefix = match role {
            Role::Teacher => "teacher",
            Role::Student => "student",
        };
        loop {
            let n = self.store.allocate_id(RecordKind::Principal);
            let principal = Principal {
                user_id: UserId(format!("{prefix}-{n}")),
                role,
                display_name: display_name.to_string(),
            };
            let record = PrincipalRecord {
                principal: principal.clone(),
                token_digests: vec![token_digest.to_string()],
            };
            let write = RecordWrite::new(RecordKind::Principal, principal.user_id.0.clone(), 0, &record);
            match self.store.commit(vec![write]) {
                Ok(_) => return Ok(principal),
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn principal(&self, user_id: &UserId) -> Option<Principal> {
        self.store
            .get(RecordKind::Principal, &user_id.0)
            .and_then(|r| r.decode::<PrincipalRecord>().ok())
            .map(|r| r.principal)
    }

    /// Every (token digest, principal) pair, for building an authenticator.
    pub fn token_digests(&self) -> Result<Vec<(String, Principal)>> {
        let mut out = Vec::new();
        for record in self.store.scan(RecordKind::Principal) {
            let r: PrincipalRecord = record.decode()?;
            for d in r.token_digests {
                out.push((d, r.principal.clone()));
            }
        }
        Ok(out)
    }

    // ---- lessons ----

    fn lesson_record(&self, id: LessonId) -> Result<(Record, Lesson)> {
        let record = self
            .store
            .get(RecordKind::Lesson, &id.to_string())
            .ok_or(Error::UnknownLesson(id))?;
        let lesson = record.decode()?;
        Ok((record, lesson))
    }

    fn owned_lesson(&self, actor: &Principal, id: LessonId) -> Result<(Record, Lesson)> {
        require_teacher(actor)?;
        let (record, lesson) = self.lesson_record(id)?;
        if lesson.owner != actor.user_id {
            return Err(Error::ForbiddenRole(format!("lesson {id} belongs to another teacher")));
        }
        Ok((record, lesson))
    }

    pub fn create_lesson(&self, actor: &Principal, title: &str) -> Result<Lesson> {
        require_teacher(actor)?;
        if title.trim().is_empty() {
            return Err(Error::EmptyTitle);
        }
        let lesson = Lesson {
            lesson_id: LessonId(self.store.allocate_id(RecordKind::Lesson)),
            title: title.to_string(),
            owner: actor.user_id.clone(),
            published: false,
            segments: Vec::new(),
        };
        self.store.commit(vec![RecordWrite::new(
            RecordKind::Lesson,
            lesson.lesson_id.to_string(),
            0,
            &lesson,
        )])?;
        Ok(lesson)
    }

    pub fn add_segment(&self, actor: &Principal, lesson_id: LessonId, draft: &SegmentDraft) -> Result<Lesson> {
        let (record, mut lesson) = self.owned_lesson(actor, lesson_id)?;
        if lesson.published {
            return Err(Error::LessonPublished(lesson_id));
        }
        let mut writes = Vec::new();
        match draft {
            SegmentDraft::Video { blob, duration_ms } => {
                let blob = self
                    .store
                    .blob_ref(blob)?
                    .ok_or_else(|| Error::InvalidSegment(format!("video blob {blob} is not stored")))?;
                if blob.media_type != MediaType::Video {
                    return Err(Error::InvalidSegment(format!("blob {} is {}, not video", blob.hash, blob.media_type)));
                }
                if *duration_ms == Some(0) {
                    return Err(Error::InvalidSegment("video duration must be positive".into()));
                }
                lesson.segments.push(Segment::Video {
                    blob,
                    duration_ms: *duration_ms,
                });
            }
            SegmentDraft::Exercise(draft) => {
                let images = StoreImages {
                    store: &self.store,
                    remote: &NoRemoteImages,
                };
                let violations = validate_exercise_offline(draft, &images);
                if !violations.is_empty() {
                    return Err(Error::Invalid(violations));
                }
                let exercise_id = ExerciseId(self.store.allocate_id(RecordKind::Exercise));
                let mut spec = spec_from_draft(exercise_id, draft, Utc::now(), self.config.default_student_gallery_access)
                    .map_err(Error::Invalid)?;
                if let Some(BackgroundImage::Blob(b)) = &mut spec.background_image {
                    // Record the stored media type rather than the caller's claim.
                    *b = self.store.blob_ref(&b.hash)?.expect("validated above");
                }
                lesson.segments.push(Segment::Exercise(spec));
                writes.push(RecordWrite::new(
                    RecordKind::Exercise,
                    exercise_id.to_string(),
                    0,
                    &ExerciseIndex { lesson_id },
                ));
            }
        }
        writes.insert(
            0,
            RecordWrite::new(RecordKind::Lesson, lesson_id.to_string(), record.version, &lesson)
                .with_blobs(lesson_blobs(&lesson)),
        );
        self.store.commit(writes)?;
        Ok(lesson)
    }

    /// Validate every exercise, snapshot remote backgrounds into the store, and
    /// mark the lesson published. Publishing twice is a no-op.
    pub fn publish_lesson(&self, actor: &Principal, lesson_id: LessonId, remote: &dyn RemoteImages) -> Result<Lesson> {
        let (record, mut lesson) = self.owned_lesson(actor, lesson_id)?;
        if lesson.published {
            return Ok(lesson);
        }
        build_timeline(&lesson)?;
        let images = StoreImages {
            store: &self.store,
            remote,
        };
        let mut violations = Vec::new();
        let mut snapshots = Vec::new();
        for (index, segment) in lesson.segments.iter().enumerate() {
            if let Segment::Exercise(spec) = segment {
                let report = validate_exercise(&spec.to_draft(), &images);
                violations.extend(report.violations);
                if let Some(ResolvedBackground::Fetched { bytes, media_type, .. }) = report.background {
                    snapshots.push((index, bytes, media_type));
                }
            }
        }
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        for (index, bytes, media_type) in snapshots {
            let blob = self.store.put_blob(&bytes, media_type)?;
            if let Segment::Exercise(spec) = &mut lesson.segments[index] {
                spec.background_image = Some(BackgroundImage::Blob(blob));
            }
        }
        lesson.published = true;
        self.store.commit(vec![RecordWrite::new(
            RecordKind::Lesson,
            lesson_id.to_string(),
            record.version,
            &lesson,
        )
        .with_blobs(lesson_blobs(&lesson))])?;
        Ok(lesson)
    }

    /// Owners always see their lessons; everyone else only published ones.
    pub fn lesson(&self, actor: &Principal, lesson_id: LessonId) -> Result<Lesson> {
        let (_, lesson) = self.lesson_record(lesson_id)?;
        if lesson.owner == actor.user_id && actor.is_teacher() {
            return Ok(lesson);
        }
        if !lesson.published {
            return Err(Error::Unpublished(lesson_id));
        }
        Ok(lesson)
    }

    pub fn timeline(&self, actor: &Principal, lesson_id: LessonId) -> Result<TimelineView> {
        let lesson = self.lesson(actor, lesson_id)?;
        let plan = build_timeline(&lesson)?;
        let exercises = lesson
            .exercises()
            .map(|spec| preview_descriptor(spec).map_err(Error::Invalid))
            .collect::<Result<Vec<_>>>()?;
        Ok(TimelineView {
            lesson_id,
            title: lesson.title,
            plan,
            exercises,
        })
    }

    pub fn preview(&self, actor: &Principal, exercise_id: ExerciseId) -> Result<RecordingDescriptor> {
        let (lesson, spec) = self.exercise(exercise_id)?;
        self.lesson(actor, lesson.lesson_id)?;
        preview_descriptor(&spec).map_err(Error::Invalid)
    }

    /// Lesson and spec of an exercise, without access checks.
    pub fn exercise(&self, exercise_id: ExerciseId) -> Result<(Lesson, ExerciseSpec)> {
        let index: ExerciseIndex = self
            .store
            .get(RecordKind::Exercise, &exercise_id.to_string())
            .ok_or(Error::UnknownExercise(exercise_id))?
            .decode()?;
        let (_, lesson) = self.lesson_record(index.lesson_id)?;
        let spec = lesson
            .exercise(exercise_id)
            .cloned()
            .ok_or(Error::UnknownExercise(exercise_id))?;
        Ok((lesson, spec))
    }

    /// The exercise, provided `actor` is the teacher who owns its lesson.
    pub fn owned_exercise(&self, actor: &Principal, exercise_id: ExerciseId) -> Result<(Lesson, ExerciseSpec)> {
        require_teacher(actor)?;
        let (lesson, spec) = self.exercise(exercise_id)?;
        if lesson.owner != actor.user_id {
            return Err(Error::ForbiddenRole(format!(
                "exercise {exercise_id} belongs to another teacher"
            )));
        }
        Ok((lesson, spec))
    }

    pub fn lessons(&self) -> Result<Vec<Lesson>> {
        self.store
            .scan(RecordKind::Lesson)
            .iter()
            .map(|r| r.decode().map_err(Error::from))
            .collect()
    }
}
