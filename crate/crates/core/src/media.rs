//! Post-processing of submitted responses: silence detection, labels, duration
//! measurement, and thumbnails.

use std::collections::BTreeSet;
use std::io::Cursor;

use image::imageops::FilterType;
use image::{DynamicImage, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ink::{self, has_ink, InkAction, InkStream, Size};
use crate::model::InputMode;

pub const SUPPORTED_RATES: [u32; 4] = [8000, 16000, 44100, 48000];
pub const SILENCE_THRESHOLD_DBFS: f64 = -50.0;
pub const WINDOW_MS: u32 = 100;
/// Track lengths this far apart (or more) produce a consistency warning.
pub const DURATION_MISMATCH_MS: u64 = 1000;
pub const DEFAULT_THUMBNAIL: Size = Size::new(320, 240);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MediaError {
    #[error("unsupported sample rate {0} Hz")]
    UnsupportedRate(u32),
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("malformed image: {0}")]
    MalformedImage(String),
}

impl MediaError {
    pub fn code(&self) -> &'static str {
        match self {
            MediaError::UnsupportedRate(_) => "unsupported-rate",
            MediaError::MalformedWav(_) | MediaError::MalformedImage(_) => "malformed-artifact",
        }
    }
}

/// Mono 16-bit linear PCM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioTrack {
    samples: Vec<i16>,
    sample_rate_hz: u32,
}

impl AudioTrack {
    pub fn new(samples: Vec<i16>, sample_rate_hz: u32) -> Result<Self, MediaError> {
        if !SUPPORTED_RATES.contains(&sample_rate_hz) {
            return Err(MediaError::UnsupportedRate(sample_rate_hz));
        }
        Ok(AudioTrack { samples, sample_rate_hz })
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn duration_ms(&self) -> u64 {
        self.samples.len() as u64 * 1000 / u64::from(self.sample_rate_hz)
    }
}

pub fn parse_wav(bytes: &[u8]) -> Result<AudioTrack, MediaError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| MediaError::MalformedWav(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(MediaError::MalformedWav(format!(
            "expected 16-bit mono PCM, got {} channel(s) of {}-bit {:?}",
            spec.channels, spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| MediaError::MalformedWav(e.to_string()))?;
    AudioTrack::new(samples, spec.sample_rate)
}

pub fn encode_wav(track: &AudioTrack) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: track.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut out, spec).expect("in-memory WAV writer");
        for &s in &track.samples {
            writer.write_sample(s).expect("in-memory WAV write");
        }
        writer.finalize().expect("in-memory WAV finalize");
    }
    out.into_inner()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilenceReport {
    pub silent: bool,
    /// Loudest 100 ms window; negative infinity for an empty or all-zero track.
    #[serde(with = "dbfs_serde")]
    pub max_window_dbfs: f64,
}

mod dbfs_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// RMS level of `samples` relative to full scale (32768).
pub fn rms_dbfs(samples: &[i16]) -> f64 {
    if samples.is_empty() {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
    let rms = (sum / samples.len() as f64).sqrt() / 32768.0;
    20.0 * rms.log10()
}

/// Silent iff every non-overlapping 100 ms window is below -50 dBFS. A short
/// final window counts as a window.
pub fn detect_silence(track: &AudioTrack) -> SilenceReport {
    let window = (track.sample_rate_hz * WINDOW_MS / 1000) as usize;
    let max_window_dbfs = track
        .samples
        .chunks(window)
        .map(rms_dbfs)
        .fold(f64::NEG_INFINITY, f64::max);
    SilenceReport {
        silent: max_window_dbfs < SILENCE_THRESHOLD_DBFS,
        max_window_dbfs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    NoAudio,
    NoInk,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::NoAudio => "no-audio",
            Label::NoInk => "no-ink",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResponseLabels(pub BTreeSet<Label>);

impl ResponseLabels {
    pub fn contains(&self, label: Label) -> bool {
        self.0.contains(&label)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Label> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<Label> for ResponseLabels {
    fn from_iter<I: IntoIterator<Item = Label>>(iter: I) -> Self {
        ResponseLabels(iter.into_iter().collect())
    }
}

/// Labels for a response given its decoded artifacts.
pub fn compute_labels(mode: InputMode, ink: Option<&InkStream>, audio: Option<&AudioTrack>) -> ResponseLabels {
    let mut labels = BTreeSet::new();
    if mode.ink_enabled() && !ink.is_some_and(has_ink) {
        labels.insert(Label::NoInk);
    }
    if mode.audio_enabled() && audio.is_some_and(|a| detect_silence(a).silent) {
        labels.insert(Label::NoAudio);
    }
    ResponseLabels(labels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DurationReport {
    pub duration_ms: u64,
    pub warnings: Vec<String>,
}

/// Longest present track; warns when tracks disagree by a second or more.
pub fn measure_duration(ink: Option<&InkStream>, audio: Option<&AudioTrack>, video_ms: Option<u64>) -> DurationReport {
    let tracks: Vec<(&str, u64)> = [
        ink.map(|s| ("ink", s.duration_ms())),
        audio.map(|a| ("audio", a.duration_ms())),
        video_ms.map(|v| ("video", v)),
    ]
    .into_iter()
    .flatten()
    .collect();
    let longest = tracks.iter().map(|t| t.1).max().unwrap_or(0);
    let shortest = tracks.iter().map(|t| t.1).min().unwrap_or(0);
    let mut warnings = Vec::new();
    if longest - shortest >= DURATION_MISMATCH_MS {
        let detail: Vec<String> = tracks.iter().map(|(k, v)| format!("{k} {v} ms")).collect();
        warnings.push(format!(
            "track durations differ by {} ms ({})",
            longest - shortest,
            detail.join(", ")
        ));
    }
    DurationReport {
        duration_ms: longest,
        warnings,
    }
}

pub fn decode_image(bytes: &[u8]) -> Result<DynamicImage, MediaError> {
    image::load_from_memory(bytes).map_err(|e| MediaError::MalformedImage(e.to_string()))
}

pub fn encode_png(img: &RgbaImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("PNG encoding into memory");
    out.into_inner()
}

/// Scale an image to exactly `size`.
pub fn fit(img: &DynamicImage, size: Size) -> RgbaImage {
    image::imageops::resize(&img.to_rgba8(), size.w, size.h, FilterType::Triangle)
}

/// Deterministic speaker-style glyph used for responses with nothing to draw.
pub fn placeholder_glyph(size: Size) -> RgbaImage {
    let mut img = RgbaImage::from_pixel(size.w, size.h, Rgba([236, 239, 241, 255]));
    let bars = [0.3, 0.6, 0.9, 0.5, 0.75, 0.4, 0.2];
    let bar_w = (size.w / 24).max(1);
    let gap = bar_w;
    let total = bars.len() as u32 * (bar_w + gap) - gap;
    let x0 = size.w.saturating_sub(total) / 2;
    let mid = size.h / 2;
    for (i, frac) in bars.iter().enumerate() {
        let half = ((f64::from(size.h) * 0.35 * frac) as u32).max(1);
        let x = x0 + i as u32 * (bar_w + gap);
        for dx in 0..bar_w {
            for y in mid.saturating_sub(half)..(mid + half).min(size.h) {
                if x + dx < size.w {
                    img.put_pixel(x + dx, y, Rgba([96, 125, 139, 255]));
                }
            }
        }
    }
    img
}

/// Which source a thumbnail was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThumbnailSource {
    Ink,
    Poster,
    Placeholder,
}

fn draws_anything(stream: &InkStream) -> bool {
    stream
        .events()
        .iter()
        .any(|e| matches!(e.action, InkAction::Down { .. }))
}

/// Final ink frame over the background if there is ink, else the poster
/// frame, else the placeholder glyph.
pub fn make_thumbnail(
    ink_stream: Option<&InkStream>,
    background: Option<&DynamicImage>,
    poster: Option<&DynamicImage>,
    size: Size,
) -> Result<(RgbaImage, ThumbnailSource), ink::InvalidSize> {
    if let Some(stream) = ink_stream.filter(|s| draws_anything(s)) {
        let layer = ink::render_layer(stream, stream.duration_ms(), size)?;
        let base = match background {
            Some(bg) => fit(bg, size),
            None => RgbaImage::from_pixel(size.w, size.h, Rgba([255, 255, 255, 255])),
        };
        return Ok((ink::composite_over(&layer, &base), ThumbnailSource::Ink));
    }
    if size.w == 0 || size.h == 0 || size.w > ink::MAX_CANVAS_SIDE || size.h > ink::MAX_CANVAS_SIDE {
        return Err(ink::InvalidSize { w: size.w, h: size.h });
    }
    if let Some(poster) = poster {
        return Ok((fit(poster, size), ThumbnailSource::Poster));
    }
    Ok((placeholder_glyph(size), ThumbnailSource::Placeholder))
}
