//! Lessons, exercises, and the playback timeline.
//!
//! A lesson is an ordered list of video segments and exercise segments. Playback
//! runs the videos back to back and stops at every exercise segment; the offset
//! of each stop is the summed duration of the videos before it.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ExerciseId, LessonId, UserId};
use crate::store::{BlobRef, MediaType};

pub const MIN_TIME_LIMIT_S: i64 = 1;
pub const MAX_TIME_LIMIT_S: i64 = 600;

/// The five modality combinations a teacher can enable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InputMode {
    #[serde(rename = "ink")]
    InkOnly,
    #[serde(rename = "audio")]
    AudioOnly,
    #[serde(rename = "video")]
    VideoOnly,
    #[serde(rename = "ink+audio")]
    InkAudio,
    #[serde(rename = "ink+video")]
    InkVideo,
}

impl InputMode {
    pub const ALL: [InputMode; 5] = [
        InputMode::InkOnly,
        InputMode::AudioOnly,
        InputMode::VideoOnly,
        InputMode::InkAudio,
        InputMode::InkVideo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InputMode::InkOnly => "ink",
            InputMode::AudioOnly => "audio",
            InputMode::VideoOnly => "video",
            InputMode::InkAudio => "ink+audio",
            InputMode::InkVideo => "ink+video",
        }
    }

    pub fn ink_enabled(self) -> bool {
        matches!(self, InputMode::InkOnly | InputMode::InkAudio | InputMode::InkVideo)
    }

    /// Microphone capture. Video modes record sound too; the client ships it
    /// as a separate PCM track next to the opaque video blob.
    pub fn audio_enabled(self) -> bool {
        !matches!(self, InputMode::InkOnly)
    }

    pub fn video_enabled(self) -> bool {
        matches!(self, InputMode::VideoOnly | InputMode::InkVideo)
    }

    pub fn enables(self, modality: Modality) -> bool {
        match modality {
            Modality::Ink => self.ink_enabled(),
            Modality::Audio => self.audio_enabled(),
            Modality::Video => self.video_enabled(),
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputMode {
    type Err = Violation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InputMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Violation::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Ink,
    Audio,
    Video,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Ink => "ink",
            Modality::Audio => "audio",
            Modality::Video => "video",
        }
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ink" => Ok(Modality::Ink),
            "audio" => Ok(Modality::Audio),
            "video" => Ok(Modality::Video),
            other => Err(format!("unknown modality {other:?}")),
        }
    }
}

/// Background image of an exercise: a stored blob, or a remote image that is
/// snapshotted into the store when the lesson is published.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundImage {
    Blob(BlobRef),
    Url(String),
}

/// Candidate exercise fields as a teacher submits them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseDraft {
    pub instructions: String,
    pub time_limit_s: i64,
    pub input_mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<BackgroundImage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student_gallery_access: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseSpec {
    pub exercise_id: ExerciseId,
    pub instructions: String,
    pub time_limit_s: u32,
    pub input_mode: InputMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_image: Option<BackgroundImage>,
    pub created_at: DateTime<Utc>,
    /// Whether students may open this exercise's gallery.
    #[serde(default)]
    pub student_gallery_access: bool,
}

impl ExerciseSpec {
    pub fn time_limit_ms(&self) -> u64 {
        u64::from(self.time_limit_s) * 1000
    }

    pub fn to_draft(&self) -> ExerciseDraft {
        ExerciseDraft {
            instructions: self.instructions.clone(),
            time_limit_s: i64::from(self.time_limit_s),
            input_mode: self.input_mode.as_str().to_string(),
            background: self.background_image.clone(),
            student_gallery_access: Some(self.student_gallery_access),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail", rename_all = "kebab-case")]
pub enum Violation {
    #[error("instructions are empty")]
    EmptyInstructions,
    #[error("time limit {0} s is outside {MIN_TIME_LIMIT_S}..={MAX_TIME_LIMIT_S}")]
    LimitOutOfRange(i64),
    #[error("unknown input mode {0:?}")]
    UnknownMode(String),
    #[error("background image unavailable: {0}")]
    BackgroundUnavailable(String),
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::EmptyInstructions => "empty-instructions",
            Violation::LimitOutOfRange(_) => "limit-out-of-range",
            Violation::UnknownMode(_) => "unknown-mode",
            Violation::BackgroundUnavailable(_) => "background-unavailable",
        }
    }
}

/// A background that passed validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolvedBackground {
    Stored(BlobRef),
    Fetched {
        url: String,
        bytes: Vec<u8>,
        media_type: MediaType,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub background: Option<ResolvedBackground>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Where validation looks up background images.
pub trait ImageSource {
    /// Media type of a stored blob, or `None` if it does not exist.
    fn stored_media_type(&self, hash: &str) -> Option<MediaType>;

    /// Download a remote image.
    fn fetch_remote(&self, url: &str) -> Result<Vec<u8>, String>;
}

/// Sniff PNG or JPEG content.
pub fn image_media_type(bytes: &[u8]) -> Option<MediaType> {
    match image::guess_format(bytes).ok()? {
        image::ImageFormat::Png => Some(MediaType::Png),
        image::ImageFormat::Jpeg => Some(MediaType::Jpeg),
        _ => None,
    }
}

fn field_violations(draft: &ExerciseDraft) -> Vec<Violation> {
    let mut violations = Vec::new();
    if draft.instructions.trim().is_empty() {
        violations.push(Violation::EmptyInstructions);
    }
    if !(MIN_TIME_LIMIT_S..=MAX_TIME_LIMIT_S).contains(&draft.time_limit_s) {
        violations.push(Violation::LimitOutOfRange(draft.time_limit_s));
    }
    if let Err(v) = draft.input_mode.parse::<InputMode>() {
        violations.push(v);
    }
    violations
}

fn check_stored(blob: &BlobRef, images: &dyn ImageSource) -> Result<BlobRef, Violation> {
    match images.stored_media_type(&blob.hash) {
        Some(media_type) if media_type.is_image() => Ok(BlobRef {
            hash: blob.hash.clone(),
            media_type,
        }),
        Some(other) => Err(Violation::BackgroundUnavailable(format!(
            "blob {} is {other}, not an image",
            blob.hash
        ))),
        None => Err(Violation::BackgroundUnavailable(format!("blob {} is not stored", blob.hash))),
    }
}

/// Full validation, including fetching a remote background.
pub fn validate_exercise(draft: &ExerciseDraft, images: &dyn ImageSource) -> ValidationReport {
    let mut report = ValidationReport {
        violations: field_violations(draft),
        background: None,
    };
    match &draft.background {
        None => {}
        Some(BackgroundImage::Blob(blob)) => match check_stored(blob, images) {
            Ok(blob) => report.background = Some(ResolvedBackground::Stored(blob)),
            Err(v) => report.violations.push(v),
        },
        Some(BackgroundImage::Url(url)) => match images.fetch_remote(url) {
            Ok(bytes) => match image_media_type(&bytes) {
                Some(media_type) => {
                    report.background = Some(ResolvedBackground::Fetched {
                        url: url.clone(),
                        bytes,
                        media_type,
                    })
                }
                None => report
                    .violations
                    .push(Violation::BackgroundUnavailable(format!("{url} is not a PNG or JPEG image"))),
            },
            Err(e) => report
                .violations
                .push(Violation::BackgroundUnavailable(format!("{url}: {e}"))),
        },
    }
    report
}

/// Validation that defers remote backgrounds until publish time.
pub fn validate_exercise_offline(draft: &ExerciseDraft, images: &dyn ImageSource) -> Vec<Violation> {
    let mut violations = field_violations(draft);
    if let Some(BackgroundImage::Blob(blob)) = &draft.background {
        if let Err(v) = check_stored(blob, images) {
            violations.push(v);
        }
    }
    violations
}

/// Build a spec from a draft whose field checks already passed.
pub fn spec_from_draft(
    exercise_id: ExerciseId,
    draft: &ExerciseDraft,
    created_at: DateTime<Utc>,
    default_gallery_access: bool,
) -> Result<ExerciseSpec, Vec<Violation>> {
    let violations = field_violations(draft);
    if !violations.is_empty() {
        return Err(violations);
    }
    Ok(ExerciseSpec {
        exercise_id,
        instructions: draft.instructions.clone(),
        time_limit_s: draft.time_limit_s as u32,
        input_mode: draft.input_mode.parse().expect("checked above"),
        background_image: draft.background.clone(),
        created_at,
        student_gallery_access: draft.student_gallery_access.unwrap_or(default_gallery_access),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Segment {
    Video {
        blob: BlobRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_ms: Option<u64>,
    },
    Exercise(ExerciseSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lesson {
    pub lesson_id: LessonId,
    pub title: String,
    pub owner: UserId,
    pub published: bool,
    pub segments: Vec<Segment>,
}

impl Lesson {
    pub fn exercises(&self) -> impl Iterator<Item = &ExerciseSpec> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Exercise(spec) => Some(spec),
            Segment::Video { .. } => None,
        })
    }

    pub fn exercise(&self, id: ExerciseId) -> Option<&ExerciseSpec> {
        self.exercises().find(|e| e.exercise_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PlanEntry {
    Play {
        start_offset_ms: u64,
        duration_ms: u64,
        blob: BlobRef,
    },
    Pause {
        exercise_id: ExerciseId,
        offset_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaybackPlan {
    pub entries: Vec<PlanEntry>,
}

impl PlaybackPlan {
    pub fn pauses(&self) -> impl Iterator<Item = (ExerciseId, u64)> + '_ {
        self.entries.iter().filter_map(|e| match e {
            PlanEntry::Pause { exercise_id, offset_ms } => Some((*exercise_id, *offset_ms)),
            PlanEntry::Play { .. } => None,
        })
    }

    pub fn total_play_ms(&self) -> u64 {
        self.entries
            .iter()
            .map(|e| match e {
                PlanEntry::Play { duration_ms, .. } => *duration_ms,
                PlanEntry::Pause { .. } => 0,
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimelineError {
    #[error("lesson has no segments")]
    EmptyLesson,
    #[error("video segment {index} has no duration")]
    UnknownDuration { index: usize },
}

impl TimelineError {
    pub fn code(&self) -> &'static str {
        match self {
            TimelineError::EmptyLesson => "empty-lesson",
            TimelineError::UnknownDuration { .. } => "unknown-duration",
        }
    }
}

pub fn build_timeline(lesson: &Lesson) -> Result<PlaybackPlan, TimelineError> {
    if lesson.segments.is_empty() {
        return Err(TimelineError::EmptyLesson);
    }
    let mut offset = 0u64;
    let mut entries = Vec::with_capacity(lesson.segments.len());
    for (index, segment) in lesson.segments.iter().enumerate() {
        match segment {
            Segment::Video { blob, duration_ms } => {
                let duration_ms = duration_ms
                    .filter(|d| *d > 0)
                    .ok_or(TimelineError::UnknownDuration { index })?;
                entries.push(PlanEntry::Play {
                    start_offset_ms: offset,
                    duration_ms,
                    blob: blob.clone(),
                });
                offset += duration_ms;
            }
            Segment::Exercise(spec) => entries.push(PlanEntry::Pause {
                exercise_id: spec.exercise_id,
                offset_ms: offset,
            }),
        }
    }
    Ok(PlaybackPlan { entries })
}

/// What the recording client shows a student for one exercise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingDescriptor {
    pub exercise_id: ExerciseId,
    pub instructions: String,
    pub canvas: bool,
    pub microphone: bool,
    pub camera: bool,
    pub time_limit_s: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<BackgroundImage>,
}

pub fn preview_descriptor(spec: &ExerciseSpec) -> Result<RecordingDescriptor, Vec<Violation>> {
    let violations = field_violations(&spec.to_draft());
    if !violations.is_empty() {
        return Err(violations);
    }
    let mode = spec.input_mode;
    Ok(RecordingDescriptor {
        exercise_id: spec.exercise_id,
        instructions: spec.instructions.clone(),
        canvas: mode.ink_enabled(),
        microphone: mode.audio_enabled(),
        camera: mode.video_enabled(),
        time_limit_s: spec.time_limit_s,
        background: spec.background_image.clone(),
    })
}

/// Lesson import manifest read by the command-line importer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LessonManifest {
    pub title: String,
    pub segments: Vec<ManifestSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ManifestSegment {
    Video {
        file: String,
        #[serde(default)]
        duration_ms: Option<u64>,
    },
    Exercise {
        instructions: String,
        time_limit_s: i64,
        input_mode: String,
        /// Local image path or http(s) URL.
        #[serde(default)]
        background: Option<String>,
        #[serde(default)]
        student_gallery_access: Option<bool>,
    },
}
