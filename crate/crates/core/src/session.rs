//! Recording sessions and response submission.
//!
//! A session is opened when a student presses record, can be discarded in
//! favor of a fresh one, and ends when a response is submitted. Submission
//! persists every artifact and the bundle metadata in one commit together with
//! a uniqueness claim on (exercise, student), so concurrent submits from the
//! same student race on that claim and exactly one wins.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ExerciseId, ResponseId, SessionToken, UserId};
use crate::ink::parse_ink_stream;
use crate::media::{
    compute_labels, decode_image, make_thumbnail, measure_duration, parse_wav, encode_png, DURATION_MISMATCH_MS,
    ResponseLabels,
};
use crate::model::{image_media_type, preview_descriptor, BackgroundImage, InputMode, RecordingDescriptor};
use crate::platform::{Platform, Principal, Role};
use crate::store::{BlobRef, MediaType, RecordKind, RecordWrite, StoreError};

/// Accepted responses may run this far past the exercise time limit.
pub const GRACE_MS: u64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Open,
    Discarded,
    Submitted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingSession {
    pub session_id: SessionToken,
    pub exercise_id: ExerciseId,
    pub student_id: UserId,
    pub started_at: DateTime<Utc>,
    pub state: SessionState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratings {
    pub confidence: u8,
    pub helpfulness: u8,
}

impl Ratings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("confidence", self.confidence), ("helpfulness", self.helpfulness)] {
            if !(1..=5).contains(&v) {
                return Err(Error::InvalidRating(format!("{name} {v} is outside 1..=5")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseBundle {
    pub response_id: ResponseId,
    pub exercise_id: ExerciseId,
    pub student_id: UserId,
    pub session_id: SessionToken,
    pub submitted_at: DateTime<Utc>,
    pub input_mode: InputMode,
    pub duration_ms: u64,
    pub ink_ref: Option<BlobRef>,
    pub audio_ref: Option<BlobRef>,
    pub video_ref: Option<BlobRef>,
    pub poster_ref: Option<BlobRef>,
    pub ratings: Ratings,
    pub labels: ResponseLabels,
    pub thumbnail_ref: Option<BlobRef>,
    pub consistency_warnings: Vec<String>,
    /// Set once labels and thumbnail have been written.
    pub processed: bool,
}

impl ResponseBundle {
    pub fn artifact_refs(&self) -> impl Iterator<Item = &BlobRef> {
        [&self.ink_ref, &self.audio_ref, &self.video_ref, &self.poster_ref, &self.thumbnail_ref]
            .into_iter()
            .flatten()
    }
}

/// Raw artifact parts of a submission.
#[derive(Debug, Clone, Default)]
pub struct Submission {
    pub ink: Option<Vec<u8>>,
    pub audio: Option<Vec<u8>>,
    pub video: Option<Vec<u8>>,
    pub poster: Option<Vec<u8>>,
    /// Length of the video part as reported by the client.
    pub declared_duration_ms: Option<u64>,
    pub ratings: Option<Ratings>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct SubmissionClaim {
    pub response_id: ResponseId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReprocessReport {
    pub examined: usize,
    pub updated: usize,
}

pub(crate) fn claim_id(exercise_id: ExerciseId, student: &UserId) -> String {
    format!("{exercise_id}:{student}")
}

impl Platform {
    fn session_record(&self, token: &SessionToken) -> Result<(u64, RecordingSession)> {
        let record = self
            .store
            .get(RecordKind::Session, &token.0)
            .ok_or_else(|| Error::UnknownSession(token.0.clone()))?;
        Ok((record.version, record.decode()?))
    }

    fn recordable_exercise(&self, actor: &Principal, exercise_id: ExerciseId) -> Result<RecordingDescriptor> {
        if actor.role != Role::Student {
            return Err(Error::ForbiddenRole("only students record responses".into()));
        }
        let (lesson, spec) = self.exercise(exercise_id)?;
        if !lesson.published {
            return Err(Error::LessonUnpublished(lesson.lesson_id));
        }
        preview_descriptor(&spec).map_err(Error::Invalid)
    }

    pub fn session(&self, token: &SessionToken) -> Result<RecordingSession> {
        Ok(self.session_record(token)?.1)
    }

    pub fn start_session(
        &self,
        actor: &Principal,
        exercise_id: ExerciseId,
    ) -> Result<(RecordingSession, RecordingDescriptor)> {
        let descriptor = self.recordable_exercise(actor, exercise_id)?;
        let session = RecordingSession {
            session_id: SessionToken::generate(),
            exercise_id,
            student_id: actor.user_id.clone(),
            started_at: Utc::now(),
            state: SessionState::Open,
        };
        self.store.commit(vec![RecordWrite::new(
            RecordKind::Session,
            session.session_id.0.clone(),
            0,
            &session,
        )])?;
        Ok((session, descriptor))
    }

    /// Discard an open take and start a fresh one, atomically.
    pub fn discard_and_rerecord(
        &self,
        actor: &Principal,
        token: &SessionToken,
    ) -> Result<(RecordingSession, RecordingDescriptor)> {
        let (version, mut old) = self.session_record(token)?;
        if old.student_id != actor.user_id {
            return Err(Error::SessionNotOwned);
        }
        if old.state != SessionState::Open {
            return Err(Error::SessionTerminal);
        }
        let descriptor = self.recordable_exercise(actor, old.exercise_id)?;
        old.state = SessionState::Discarded;
        let fresh = RecordingSession {
            session_id: SessionToken::generate(),
            exercise_id: old.exercise_id,
            student_id: actor.user_id.clone(),
            started_at: Utc::now(),
            state: SessionState::Open,
        };
        let result = self.store.commit(vec![
            RecordWrite::new(RecordKind::Session, token.0.clone(), version, &old),
            RecordWrite::new(RecordKind::Session, fresh.session_id.0.clone(), 0, &fresh),
        ]);
        match result {
            Ok(_) => Ok((fresh, descriptor)),
            Err(StoreError::VersionConflict { kind: RecordKind::Session, id, .. }) if id == token.0 => {
                Err(Error::SessionTerminal)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Validate, persist, and return a response bundle. Labels and the
    /// thumbnail are filled in later by [`Platform::process_response`].
    pub fn submit(
        &self,
        actor: &Principal,
        exercise_id: ExerciseId,
        token: &SessionToken,
        submission: Submission,
    ) -> Result<ResponseBundle> {
        if actor.role != Role::Student {
            return Err(Error::ForbiddenRole("only students submit responses".into()));
        }
        let (session_version, mut session) = self.session_record(token)?;
        if session.student_id != actor.user_id || session.exercise_id != exercise_id {
            return Err(Error::SessionNotOwned);
        }
        if session.state != SessionState::Open {
            return Err(Error::SessionTerminal);
        }
        let ratings = submission
            .ratings
            .ok_or_else(|| Error::MalformedArtifact("metadata lacks ratings".into()))?;
        ratings.validate()?;
        let (lesson, spec) = self.exercise(exercise_id)?;
        if !lesson.published {
            return Err(Error::LessonUnpublished(lesson.lesson_id));
        }
        let mode = spec.input_mode;

        let parts = [
            ("ink", submission.ink.is_some(), mode.ink_enabled()),
            ("audio", submission.audio.is_some(), mode.audio_enabled()),
            ("video", submission.video.is_some(), mode.video_enabled()),
            ("poster", submission.poster.is_some(), mode.video_enabled()),
        ];
        for (name, present, enabled) in parts {
            if present && !enabled {
                return Err(Error::ModeMismatch(format!("{name} part on a {mode} exercise")));
            }
        }
        if parts.iter().all(|p| !p.1) {
            return Err(Error::MalformedArtifact("submission has no artifacts".into()));
        }

        let ink = submission
            .ink
            .as_deref()
            .map(parse_ink_stream)
            .transpose()
            .map_err(|e| Error::MalformedArtifact(format!("ink: {e}")))?;
        let audio = submission
            .audio
            .as_deref()
            .map(parse_wav)
            .transpose()
            .map_err(|e| Error::MalformedArtifact(format!("audio: {e}")))?;
        let video_ms = match &submission.video {
            Some(v) if v.is_empty() => return Err(Error::MalformedArtifact("video part is empty".into())),
            Some(_) => {
                if audio.is_none() {
                    return Err(Error::MalformedArtifact(
                        "video submissions need the extracted audio track".into(),
                    ));
                }
                Some(submission.declared_duration_ms.ok_or_else(|| {
                    Error::MalformedArtifact("video submissions need declared_duration_ms".into())
                })?)
            }
            None => None,
        };
        let poster_type = match &submission.poster {
            Some(p) => Some(
                image_media_type(p).ok_or_else(|| Error::MalformedArtifact("poster is not PNG or JPEG".into()))?,
            ),
            None => None,
        };
        if let Some(p) = &submission.poster {
            decode_image(p).map_err(|e| Error::MalformedArtifact(format!("poster: {e}")))?;
        }

        let mut measured = measure_duration(ink.as_ref(), audio.as_ref(), video_ms);
        if let (None, Some(declared)) = (video_ms, submission.declared_duration_ms) {
            if declared.abs_diff(measured.duration_ms) >= DURATION_MISMATCH_MS {
                measured.warnings.push(format!(
                    "declared duration {declared} ms differs from measured {} ms",
                    measured.duration_ms
                ));
            }
        }
        let allowed_ms = spec.time_limit_ms() + GRACE_MS;
        if measured.duration_ms > allowed_ms {
            return Err(Error::OverLimit {
                duration_ms: measured.duration_ms,
                allowed_ms,
            });
        }

        let claim = claim_id(exercise_id, &actor.user_id);
        if self.store.get(RecordKind::SubmissionClaim, &claim).is_some() {
            return Err(Error::DuplicateSubmission);
        }

        let put = |bytes: &Option<Vec<u8>>, media_type: MediaType| -> Result<Option<BlobRef>> {
            bytes
                .as_deref()
                .map(|b| self.store.put_blob(b, media_type))
                .transpose()
                .map_err(Error::from)
        };
        let ink_ref = put(&submission.ink, MediaType::InkJson)?;
        let audio_ref = put(&submission.audio, MediaType::Wav)?;
        let video_ref = put(&submission.video, MediaType::Video)?;
        let poster_ref = match poster_type {
            Some(t) => put(&submission.poster, t)?,
            None => None,
        };

        let bundle = ResponseBundle {
            response_id: ResponseId(self.store.allocate_id(RecordKind::Response)),
            exercise_id,
            student_id: actor.user_id.clone(),
            session_id: token.clone(),
            submitted_at: Utc::now(),
            input_mode: mode,
            duration_ms: measured.duration_ms,
            ink_ref,
            audio_ref,
            video_ref,
            poster_ref,
            ratings,
            labels: ResponseLabels::default(),
            thumbnail_ref: None,
            consistency_warnings: measured.warnings,
            processed: false,
        };
        session.state = SessionState::Submitted;
        let writes = vec![
            RecordWrite::new(RecordKind::Session, token.0.clone(), session_version, &session),
            RecordWrite::new(
                RecordKind::SubmissionClaim,
                claim,
                0,
                &SubmissionClaim {
                    response_id: bundle.response_id,
                },
            ),
            RecordWrite::new(RecordKind::Response, bundle.response_id.to_string(), 0, &bundle)
                .with_blobs(bundle.artifact_refs().cloned()),
        ];
        match self.store.commit(writes) {
            Ok(_) => Ok(bundle),
            Err(StoreError::VersionConflict {
                kind: RecordKind::SubmissionClaim,
                ..
            }) => Err(Error::DuplicateSubmission),
            Err(StoreError::VersionConflict {
                kind: RecordKind::Session,
                ..
            }) => Err(Error::SessionTerminal),
            Err(e) => Err(e.into()),
        }
    }

    pub fn response(&self, response_id: ResponseId) -> Result<(u64, ResponseBundle)> {
        let record = self
            .store
            .get(RecordKind::Response, &response_id.to_string())
            .ok_or(Error::UnknownResponse(response_id))?;
        Ok((record.version, record.decode()?))
    }

    pub fn responses_for(&self, exercise_id: ExerciseId) -> Result<Vec<ResponseBundle>> {
        let mut out = Vec::new();
        for record in self.store.scan(RecordKind::Response) {
            let bundle: ResponseBundle = record.decode()?;
            if bundle.exercise_id == exercise_id {
                out.push(bundle);
            }
        }
        Ok(out)
    }

    pub fn unprocessed_responses(&self) -> Result<Vec<ResponseId>> {
        let mut out = Vec::new();
        for record in self.store.scan(RecordKind::Response) {
            let bundle: ResponseBundle = record.decode()?;
            if !bundle.processed {
                out.push(bundle.response_id);
            }
        }
        out.sort();
        Ok(out)
    }

    fn read_artifact(&self, blob: &BlobRef) -> Result<Vec<u8>> {
        self.store
            .read_blob(&blob.hash)
            .map(|(_, bytes)| bytes)
            .map_err(|e| Error::ArtifactUnreadable(format!("{}: {e}", blob.hash)))
    }

    /// Labels from the stored artifacts of a bundle.
    pub fn label_response(&self, bundle: &ResponseBundle) -> Result<ResponseLabels> {
        let ink = match &bundle.ink_ref {
            Some(b) => Some(
                parse_ink_stream(&self.read_artifact(b)?).map_err(|e| Error::ArtifactUnreadable(e.to_string()))?,
            ),
            None => None,
        };
        let audio = match &bundle.audio_ref {
            Some(b) => Some(parse_wav(&self.read_artifact(b)?).map_err(|e| Error::ArtifactUnreadable(e.to_string()))?),
            None => None,
        };
        Ok(compute_labels(bundle.input_mode, ink.as_ref(), audio.as_ref()))
    }

    /// Render and store the card thumbnail for a bundle.
    pub fn make_thumbnail(&self, bundle: &ResponseBundle) -> Result<BlobRef> {
        let ink = match &bundle.ink_ref {
            Some(b) => Some(
                parse_ink_stream(&self.read_artifact(b)?).map_err(|e| Error::ArtifactUnreadable(e.to_string()))?,
            ),
            None => None,
        };
        let (_, spec) = self.exercise(bundle.exercise_id)?;
        let background = match &spec.background_image {
            Some(BackgroundImage::Blob(b)) => Some(
                decode_image(&self.read_artifact(b)?).map_err(|e| Error::ArtifactUnreadable(e.to_string()))?,
            ),
            _ => None,
        };
        let poster = match &bundle.poster_ref {
            Some(b) => Some(decode_image(&self.read_artifact(b)?).map_err(|e| Error::ArtifactUnreadable(e.to_string()))?),
            None => None,
        };
        let (img, _) = make_thumbnail(ink.as_ref(), background.as_ref(), poster.as_ref(), self.config.thumbnail_size)
            .map_err(|e| Error::ArtifactUnreadable(e.to_string()))?;
        Ok(self.store.put_blob(&encode_png(&img), MediaType::Png)?)
    }

    /// Write labels and thumbnail once. Already processed bundles are returned
    /// unchanged.
    pub fn process_response(&self, response_id: ResponseId) -> Result<ResponseBundle> {
        loop {
            let (version, mut bundle) = self.response(response_id)?;
            if bundle.processed {
                return Ok(bundle);
            }
            bundle.labels = self.label_response(&bundle)?;
            bundle.thumbnail_ref = Some(self.make_thumbnail(&bundle)?);
            bundle.processed = true;
            let write = RecordWrite::new(RecordKind::Response, response_id.to_string(), version, &bundle)
                .with_blobs(bundle.artifact_refs().cloned());
            match self.store.commit(vec![write]) {
                Ok(_) => return Ok(bundle),
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn process_pending(&self) -> Result<usize> {
        let pending = self.unprocessed_responses()?;
        for id in &pending {
            self.process_response(*id)?;
        }
        Ok(pending.len())
    }

    /// Re-run labeling for one exercise. Bundles whose labels already match
    /// are left untouched.
    pub fn reprocess(&self, exercise_id: ExerciseId) -> Result<ReprocessReport> {
        self.exercise(exercise_id)?;
        let mut report = ReprocessReport::default();
        for bundle in self.responses_for(exercise_id)? {
            report.examined += 1;
            if !bundle.processed {
                self.process_response(bundle.response_id)?;
                report.updated += 1;
                continue;
            }
            let labels = self.label_response(&bundle)?;
            if labels != bundle.labels {
                let (version, mut current) = self.response(bundle.response_id)?;
                current.labels = labels;
                self.store.commit(vec![RecordWrite::new(
                    RecordKind::Response,
                    bundle.response_id.to_string(),
                    version,
                    &current,
                )
                .with_blobs(current.artifact_refs().cloned())])?;
                report.updated += 1;
            }
        }
        Ok(report)
    }
}
