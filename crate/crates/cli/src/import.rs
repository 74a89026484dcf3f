//! Lesson import from a JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use pausepoint_client::{Client, ClientError};
use pausepoint_core::model::{image_media_type, BackgroundImage, LessonManifest, ManifestSegment};
use pausepoint_core::{ExerciseDraft, Lesson, MediaType, SegmentDraft};

use crate::error::{CliError, Result};

/// A manifest with every referenced local file already read.
#[derive(Debug, Clone)]
pub struct PreparedLesson {
    pub title: String,
    pub segments: Vec<PreparedSegment>,
}

#[derive(Debug, Clone)]
pub enum PreparedSegment {
    Video {
        bytes: Vec<u8>,
        duration_ms: Option<u64>,
    },
    Exercise {
        draft: ExerciseDraft,
        local_background: Option<(Vec<u8>, MediaType)>,
    },
}

fn is_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parse the manifest at `path` and read the files it names, relative to
/// the manifest's directory.
pub fn prepare(path: &Path) -> Result<PreparedLesson> {
    let text = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let manifest: LessonManifest =
        serde_json::from_slice(&text).map_err(|e| CliError::new("bad-manifest", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    prepare_manifest(manifest, base)
}

pub fn prepare_manifest(manifest: LessonManifest, base: &Path) -> Result<PreparedLesson> {
    if manifest.title.trim().is_empty() {
        return Err(CliError::new("bad-manifest", "title is empty"));
    }
    let mut segments = Vec::with_capacity(manifest.segments.len());
    for segment in manifest.segments {
        segments.push(match segment {
            ManifestSegment::Video { file, duration_ms } => {
                let path = resolve(base, &file);
                let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
                PreparedSegment::Video { bytes, duration_ms }
            }
            ManifestSegment::Exercise {
                instructions,
                time_limit_s,
                input_mode,
                background,
                student_gallery_access,
            } => {
                let mut local_background = None;
                let background = match background {
                    Some(url) if is_url(&url) => Some(BackgroundImage::Url(url)),
                    Some(file) => {
                        let path = resolve(base, &file);
                        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
                        let media_type = image_media_type(&bytes).ok_or_else(|| {
                            CliError::new("bad-manifest", format!("{} is not a PNG or JPEG image", path.display()))
                        })?;
                        local_background = Some((bytes, media_type));
                        None
                    }
                    None => None,
                };
                PreparedSegment::Exercise {
                    draft: ExerciseDraft {
                        instructions,
                        time_limit_s,
                        input_mode,
                        background,
                        student_gallery_access,
                    },
                    local_background,
                }
            }
        });
    }
    Ok(PreparedLesson {
        title: manifest.title,
        segments,
    })
}

fn segment_error(index: usize, e: ClientError) -> CliError {
    match e {
        ClientError::Api { status, code, detail } if status.is_client_error() && status.as_u16() != 401 && status.as_u16() != 403 => {
            CliError::new("bad-manifest", format!("segment {index}: {code}: {detail}"))
        }
        other => other.into(),
    }
}

/// Create the lesson through `client`, uploading media first. The lesson
/// stays a draft unless `publish` is set.
pub async fn import(client: &Client, lesson: &PreparedLesson, publish: bool) -> Result<Lesson> {
    let created = client.create_lesson(&lesson.title).await?;
    let id = created.lesson_id;
    for (index, segment) in lesson.segments.iter().enumerate() {
        let draft = match segment {
            PreparedSegment::Video { bytes, duration_ms } => {
                let blob = client.upload_blob(bytes.clone(), MediaType::Video).await?;
                SegmentDraft::Video {
                    blob: blob.hash,
                    duration_ms: *duration_ms,
                }
            }
            PreparedSegment::Exercise {
                draft,
                local_background,
            } => {
                let mut draft = draft.clone();
                if let Some((bytes, media_type)) = local_background {
                    let blob = client.upload_blob(bytes.clone(), *media_type).await?;
                    draft.background = Some(BackgroundImage::Blob(blob));
                }
                SegmentDraft::Exercise(draft)
            }
        };
        client.add_segment(id, &draft).await.map_err(|e| segment_error(index, e))?;
    }
    if publish {
        return Ok(client.publish(id).await?);
    }
    Ok(client.lesson(id).await?)
}
