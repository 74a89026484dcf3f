//! Review gallery: cards, sorting and filtering, per-viewer review state,
//! synchronized playback manifests, likes and threaded comments.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{AnnotationId, ExerciseId, ResponseId, UserId};
use crate::media::{Label, ResponseLabels};
use crate::model::{ExerciseSpec, Lesson, Modality};
use crate::platform::{lesson_blobs, Platform, Principal, Role};
use crate::session::ResponseBundle;
use crate::store::{BlobRef, RecordKind, RecordWrite, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    SubmittedAt,
    Duration,
    StudentName,
    Confidence,
    Helpfulness,
}

impl SortKey {
    pub const ALL: [SortKey; 5] = [
        SortKey::SubmittedAt,
        SortKey::Duration,
        SortKey::StudentName,
        SortKey::Confidence,
        SortKey::Helpfulness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SortKey::SubmittedAt => "submitted_at",
            SortKey::Duration => "duration",
            SortKey::StudentName => "student_name",
            SortKey::Confidence => "confidence",
            SortKey::Helpfulness => "helpfulness",
        }
    }
}

impl FromStr for SortKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SortKey::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownSortKey(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortDirection {
    #[default]
    Asc,
    Desc,
}

impl FromStr for SortDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asc" => Ok(SortDirection::Asc),
            "desc" => Ok(SortDirection::Desc),
            other => Err(Error::InvalidQuery(format!("unknown direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReviewFilter {
    Reviewed,
    NotReviewed,
}

impl FromStr for ReviewFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reviewed" => Ok(ReviewFilter::Reviewed),
            "not-reviewed" => Ok(ReviewFilter::NotReviewed),
            other => Err(Error::InvalidQuery(format!("unknown review status {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GalleryQuery {
    pub sort: SortKey,
    pub direction: SortDirection,
    pub mode_present: Option<Modality>,
    pub review_status: Option<ReviewFilter>,
}

impl Default for GalleryQuery {
    fn default() -> Self {
        GalleryQuery {
            sort: SortKey::SubmittedAt,
            direction: SortDirection::Asc,
            mode_present: None,
            review_status: None,
        }
    }
}

impl GalleryQuery {
    /// Build a query from optional string parameters.
    pub fn parse(sort: Option<&str>, dir: Option<&str>, mode: Option<&str>, review: Option<&str>) -> Result<Self> {
        Ok(GalleryQuery {
            sort: sort.map(str::parse).transpose()?.unwrap_or(SortKey::SubmittedAt),
            direction: dir.map(str::parse).transpose()?.unwrap_or_default(),
            mode_present: mode
                .map(|m| m.parse::<Modality>().map_err(Error::InvalidQuery))
                .transpose()?,
            review_status: review.map(str::parse).transpose()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GalleryCard {
    pub response_id: ResponseId,
    pub student_id: UserId,
    pub student_name: String,
    pub thumbnail_ref: Option<BlobRef>,
    pub duration_ms: u64,
    pub confidence: u8,
    pub helpfulness: u8,
    pub captured_modes: BTreeSet<Modality>,
    pub labels: ResponseLabels,
    pub submitted_at: DateTime<Utc>,
    pub reviewed_by_viewer: bool,
    pub processed: bool,
    pub like_count: usize,
    pub comment_count: usize,
}

/// Modalities whose artifact is present and not labeled absent.
pub fn captured_modes(bundle: &ResponseBundle) -> BTreeSet<Modality> {
    let mut modes = BTreeSet::new();
    if bundle.ink_ref.is_some() && !bundle.labels.contains(Label::NoInk) {
        modes.insert(Modality::Ink);
    }
    if bundle.audio_ref.is_some() && !bundle.labels.contains(Label::NoAudio) {
        modes.insert(Modality::Audio);
    }
    if bundle.video_ref.is_some() {
        modes.insert(Modality::Video);
    }
    modes
}

pub fn card_matches(card: &GalleryCard, query: &GalleryQuery) -> bool {
    let mode_ok = query.mode_present.is_none_or(|m| card.captured_modes.contains(&m));
    let review_ok = match query.review_status {
        None => true,
        Some(ReviewFilter::Reviewed) => card.reviewed_by_viewer,
        Some(ReviewFilter::NotReviewed) => !card.reviewed_by_viewer,
    };
    mode_ok && review_ok
}

fn key_cmp(a: &GalleryCard, b: &GalleryCard, key: SortKey) -> Ordering {
    match key {
        SortKey::SubmittedAt => a.submitted_at.cmp(&b.submitted_at),
        SortKey::Duration => a.duration_ms.cmp(&b.duration_ms),
        SortKey::StudentName => a.student_name.cmp(&b.student_name),
        SortKey::Confidence => a.confidence.cmp(&b.confidence),
        SortKey::Helpfulness => a.helpfulness.cmp(&b.helpfulness),
    }
}

/// Sort by `key` in `direction`; ties always break by ascending response id.
pub fn sort_cards(cards: &mut [GalleryCard], key: SortKey, direction: SortDirection) {
    cards.sort_unstable_by(|a, b| {
        let primary = key_cmp(a, b, key);
        let primary = match direction {
            SortDirection::Asc => primary,
            SortDirection::Desc => primary.reverse(),
        };
        primary.then(a.response_id.cmp(&b.response_id))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackKind {
    Ink,
    Audio,
    Video,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaybackTrack {
    pub kind: TrackKind,
    pub artifact_ref: BlobRef,
    pub clock_origin_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaybackManifest {
    pub response_id: ResponseId,
    pub duration_ms: u64,
    pub tracks: Vec<PlaybackTrack>,
}

pub fn manifest_for(bundle: &ResponseBundle) -> PlaybackManifest {
    let tracks = [
        (TrackKind::Ink, &bundle.ink_ref),
        (TrackKind::Audio, &bundle.audio_ref),
        (TrackKind::Video, &bundle.video_ref),
    ]
    .into_iter()
    .filter_map(|(kind, r)| {
        r.as_ref().map(|r| PlaybackTrack {
            kind,
            artifact_ref: r.clone(),
            clock_origin_ms: 0,
        })
    })
    .collect();
    PlaybackManifest {
        response_id: bundle.response_id,
        duration_ms: bundle.duration_ms,
        tracks,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewState {
    pub viewer_id: UserId,
    pub response_id: ResponseId,
    pub reviewed: bool,
    pub first_reviewed_at: DateTime<Utc>,
}

fn review_id(response_id: ResponseId, viewer: &UserId) -> String {
    format!("{response_id}:{viewer}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationKind {
    Like,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_id: AnnotationId,
    pub response_id: ResponseId,
    pub author_id: UserId,
    pub kind: AnnotationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<AnnotationId>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationDraft {
    pub kind: AnnotationKind,
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub parent_id: Option<AnnotationId>,
}

/// How much of a gallery a viewer may see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Access {
    Owner,
    Student,
}

fn gallery_access(viewer: &Principal, lesson: &Lesson, spec: &ExerciseSpec) -> Result<Access> {
    match viewer.role {
        Role::Teacher if lesson.owner == viewer.user_id => Ok(Access::Owner),
        Role::Teacher => Err(Error::ForbiddenRole(format!(
            "exercise {} belongs to another teacher",
            spec.exercise_id
        ))),
        Role::Student if spec.student_gallery_access && lesson.published => Ok(Access::Student),
        Role::Student => Err(Error::ForbiddenRole(format!(
            "students have no access to the gallery of exercise {}",
            spec.exercise_id
        ))),
    }
}

impl Platform {
    fn response_with_access(&self, viewer: &Principal, response_id: ResponseId) -> Result<(ResponseBundle, Access)> {
        let (_, bundle) = self.response(response_id)?;
        let (lesson, spec) = self.exercise(bundle.exercise_id)?;
        let access = gallery_access(viewer, &lesson, &spec)?;
        Ok((bundle, access))
    }

    fn is_reviewed(&self, viewer: &UserId, response_id: ResponseId) -> bool {
        self.store
            .get(RecordKind::ReviewState, &review_id(response_id, viewer))
            .is_some()
    }

    fn annotation_counts(&self) -> Result<HashMap<ResponseId, (usize, usize)>> {
        let mut counts: HashMap<ResponseId, (usize, usize)> = HashMap::new();
        for record in self.store.scan(RecordKind::Annotation) {
            let a: Annotation = record.decode()?;
            let slot = counts.entry(a.response_id).or_default();
            match a.kind {
                AnnotationKind::Like => slot.0 += 1,
                AnnotationKind::Comment => slot.1 += 1,
            }
        }
        Ok(counts)
    }

    pub fn list_responses(
        &self,
        viewer: &Principal,
        exercise_id: ExerciseId,
        query: &GalleryQuery,
    ) -> Result<Vec<GalleryCard>> {
        let (lesson, spec) = self.exercise(exercise_id)?;
        let access = gallery_access(viewer, &lesson, &spec)?;
        let counts = self.annotation_counts()?;
        let mut names: HashMap<UserId, String> = HashMap::new();
        let mut cards = Vec::new();
        for bundle in self.responses_for(exercise_id)? {
            let student_name = names
                .entry(bundle.student_id.clone())
                .or_insert_with(|| {
                    self.principal(&bundle.student_id)
                        .map(|p| p.display_name)
                        .unwrap_or_else(|| bundle.student_id.0.clone())
                })
                .clone();
            let (like_count, comment_count) = counts.get(&bundle.response_id).copied().unwrap_or_default();
            let card = GalleryCard {
                response_id: bundle.response_id,
                student_id: bundle.student_id.clone(),
                student_name,
                thumbnail_ref: bundle.thumbnail_ref.clone(),
                duration_ms: bundle.duration_ms,
                confidence: bundle.ratings.confidence,
                helpfulness: bundle.ratings.helpfulness,
                captured_modes: captured_modes(&bundle),
                labels: match access {
                    Access::Owner => bundle.labels.clone(),
                    Access::Student => ResponseLabels::default(),
                },
                submitted_at: bundle.submitted_at,
                reviewed_by_viewer: self.is_reviewed(&viewer.user_id, bundle.response_id),
                processed: bundle.processed,
                like_count,
                comment_count,
            };
            if card_matches(&card, query) {
                cards.push(card);
            }
        }
        sort_cards(&mut cards, query.sort, query.direction);
        Ok(cards)
    }

    /// Flag a response as played by `viewer`. Idempotent.
    pub fn mark_reviewed(&self, viewer: &Principal, response_id: ResponseId) -> Result<ReviewState> {
        self.response_with_access(viewer, response_id)?;
        let id = review_id(response_id, &viewer.user_id);
        if let Some(existing) = self.store.get(RecordKind::ReviewState, &id) {
            return Ok(existing.decode()?);
        }
        let state = ReviewState {
            viewer_id: viewer.user_id.clone(),
            response_id,
            reviewed: true,
            first_reviewed_at: Utc::now(),
        };
        match self
            .store
            .commit(vec![RecordWrite::new(RecordKind::ReviewState, id.clone(), 0, &state)])
        {
            Ok(_) => Ok(state),
            Err(StoreError::VersionConflict { .. }) => Ok(self
                .store
                .get(RecordKind::ReviewState, &id)
                .expect("conflict implies the record exists")
                .decode()?),
            Err(e) => Err(e.into()),
        }
    }

    /// Tracks of a processed response on a shared clock. Serving the manifest
    /// counts as the viewer having played the response.
    pub fn playback_manifest(&self, viewer: &Principal, response_id: ResponseId) -> Result<PlaybackManifest> {
        let (bundle, _) = self.response_with_access(viewer, response_id)?;
        if !bundle.processed {
            return Err(Error::NotYetProcessed(response_id));
        }
        let manifest = manifest_for(&bundle);
        self.mark_reviewed(viewer, response_id)?;
        Ok(manifest)
    }

    /// Whether `viewer` may download a blob: it belongs to a lesson they can
    /// see, to their own response, or to a gallery they can open. Blobs no
    /// record refers to yet are visible to teachers only.
    pub fn can_read_blob(&self, viewer: &Principal, hash: &str) -> Result<bool> {
        let mut referenced = false;
        for lesson in self.lessons()? {
            if lesson_blobs(&lesson).iter().any(|b| b.hash == hash) {
                if lesson.published || lesson.owner == viewer.user_id {
                    return Ok(true);
                }
                referenced = true;
            }
        }
        for record in self.store.scan(RecordKind::Response) {
            if !record.blobs.iter().any(|b| b.as_str() == hash) {
                continue;
            }
            let bundle: ResponseBundle = record.decode()?;
            if bundle.student_id == viewer.user_id {
                return Ok(true);
            }
            let (lesson, spec) = self.exercise(bundle.exercise_id)?;
            if gallery_access(viewer, &lesson, &spec).is_ok() {
                return Ok(true);
            }
            referenced = true;
        }
        Ok(!referenced && viewer.role == Role::Teacher)
    }

    pub fn annotations(&self, viewer: &Principal, response_id: ResponseId) -> Result<Vec<Annotation>> {
        self.response_with_access(viewer, response_id)?;
        let mut out = Vec::new();
        for record in self.store.scan(RecordKind::Annotation) {
            let a: Annotation = record.decode()?;
            if a.response_id == response_id {
                out.push(a);
            }
        }
        out.sort_by_key(|a| a.annotation_id);
        Ok(out)
    }

    pub fn add_annotation(
        &self,
        viewer: &Principal,
        response_id: ResponseId,
        draft: &AnnotationDraft,
    ) -> Result<Annotation> {
        self.response_with_access(viewer, response_id)?;
        let body = draft.body.as_deref().map(str::trim);
        match draft.kind {
            AnnotationKind::Like if draft.body.is_some() || draft.parent_id.is_some() => {
                return Err(Error::LikeWithBody)
            }
            AnnotationKind::Comment if body.is_none_or(str::is_empty) => return Err(Error::EmptyComment),
            _ => {}
        }

        let _guard = self.annotation_lock.lock().unwrap();
        let existing = self.annotations(viewer, response_id)?;
        if draft.kind == AnnotationKind::Like {
            if let Some(like) = existing
                .iter()
                .find(|a| a.kind == AnnotationKind::Like && a.author_id == viewer.user_id)
            {
                return Ok(like.clone());
            }
        }
        if let Some(parent_id) = draft.parent_id {
            match self.store.get(RecordKind::Annotation, &parent_id.to_string()) {
                None => return Err(Error::BadParent(format!("annotation {parent_id} does not exist"))),
                Some(record) => {
                    let parent: Annotation = record.decode()?;
                    if parent.response_id != response_id {
                        return Err(Error::BadParent(format!(
                            "annotation {parent_id} belongs to response {}",
                            parent.response_id
                        )));
                    }
                    if parent.kind != AnnotationKind::Comment {
                        return Err(Error::BadParent(format!("annotation {parent_id} is not a comment")));
                    }
                }
            }
        }
        let annotation = Annotation {
            annotation_id: AnnotationId(self.store.allocate_id(RecordKind::Annotation)),
            response_id,
            author_id: viewer.user_id.clone(),
            kind: draft.kind,
            body: draft.body.clone(),
            parent_id: draft.parent_id,
            created_at: Utc::now(),
        };
        self.store.commit(vec![RecordWrite::new(
            RecordKind::Annotation,
            annotation.annotation_id.to_string(),
            0,
            &annotation,
        )])?;
        Ok(annotation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn card(id: u64, name: &str, confidence: u8, helpfulness: u8, duration: u64) -> GalleryCard {
        GalleryCard {
            response_id: ResponseId(id),
            student_id: UserId(format!("s{id}")),
            student_name: name.into(),
            thumbnail_ref: None,
            duration_ms: duration,
            confidence,
            helpfulness,
            captured_modes: BTreeSet::new(),
            labels: ResponseLabels::default(),
            submitted_at: DateTime::from_timestamp(1_700_000_000 + id as i64, 0).unwrap(),
            reviewed_by_viewer: false,
            processed: true,
            like_count: 0,
            comment_count: 0,
        }
    }

    fn ids(cards: &[GalleryCard]) -> Vec<u64> {
        cards.iter().map(|c| c.response_id.0).collect()
    }

    #[test]
    fn helpfulness_ascending() {
        let mut cards = vec![card(1, "a", 3, 5, 0), card(2, "b", 3, 2, 0), card(3, "c", 3, 4, 0)];
        sort_cards(&mut cards, SortKey::Helpfulness, SortDirection::Asc);
        assert_eq!(cards.iter().map(|c| c.helpfulness).collect::<Vec<_>>(), vec![2, 4, 5]);
    }

    #[test]
    fn ties_break_by_ascending_id_in_both_directions() {
        let mut cards = vec![card(9, "a", 3, 1, 0), card(4, "b", 3, 1, 0), card(6, "c", 5, 1, 0)];
        sort_cards(&mut cards, SortKey::Confidence, SortDirection::Asc);
        assert_eq!(ids(&cards), vec![4, 9, 6]);
        sort_cards(&mut cards, SortKey::Confidence, SortDirection::Desc);
        assert_eq!(ids(&cards), vec![6, 4, 9]);
    }

    #[test]
    fn query_parsing() {
        let q = GalleryQuery::parse(Some("helpfulness"), Some("desc"), Some("ink"), Some("not-reviewed")).unwrap();
        assert_eq!(q.sort, SortKey::Helpfulness);
        assert_eq!(q.direction, SortDirection::Desc);
        assert_eq!(q.mode_present, Some(Modality::Ink));
        assert_eq!(q.review_status, Some(ReviewFilter::NotReviewed));
        let err = GalleryQuery::parse(Some("shoe_size"), None, None, None).unwrap_err();
        assert_eq!(err.code(), "unknown-sort-key");
        assert_eq!(GalleryQuery::parse(None, Some("up"), None, None).unwrap_err().code(), "invalid-query");
        assert_eq!(GalleryQuery::parse(None, None, None, None).unwrap(), GalleryQuery::default());
    }

    #[test]
    fn mode_filter_uses_labels() {
        let mut with_ink = card(1, "a", 1, 1, 0);
        with_ink.captured_modes.insert(Modality::Ink);
        let without = card(2, "b", 1, 1, 0);
        let q = GalleryQuery {
            mode_present: Some(Modality::Ink),
            ..GalleryQuery::default()
        };
        assert!(card_matches(&with_ink, &q));
        assert!(!card_matches(&without, &q));
    }
}
