//! Synthetic student population.
//!
//! Every student's response is a pure function of the profile seed, the
//! student index and the exercise, so a run can be replayed to recover the
//! intended labels, durations and ratings without reading anything back.

use std::f64::consts::PI;

use image::{Rgba, RgbaImage};
use pausepoint_core::ink::{InkEvent, InkStream};
use pausepoint_core::media::{encode_png, encode_wav, AudioTrack, Label};
use pausepoint_core::model::{ExerciseSpec, InputMode, RecordingDescriptor};
use pausepoint_core::ExerciseId;
use pausepoint_core::session::Ratings;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SAMPLE_RATE_HZ: u32 = 16_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimProfile {
    pub n_students: usize,
    pub ink_prob: f64,
    pub silence_prob: f64,
    pub duration_range_ms: (u64, u64),
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("n_students must be positive")]
    NoStudents,
    #[error("{0} must lie in [0, 1]")]
    Probability(&'static str),
    #[error("duration range {0}..{1} is empty")]
    Range(u64, u64),
}

impl SimProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.n_students == 0 {
            return Err(ProfileError::NoStudents);
        }
        for (name, p) in [("ink_prob", self.ink_prob), ("silence_prob", self.silence_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ProfileError::Probability(name));
            }
        }
        let (lo, hi) = self.duration_range_ms;
        if lo > hi || hi == 0 {
            return Err(ProfileError::Range(lo, hi));
        }
        Ok(())
    }
}

/// The exercise facts the generator needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimTarget {
    pub exercise_id: ExerciseId,
    pub input_mode: InputMode,
    pub time_limit_ms: u64,
}

impl From<&ExerciseSpec> for SimTarget {
    fn from(spec: &ExerciseSpec) -> Self {
        SimTarget {
            exercise_id: spec.exercise_id,
            input_mode: spec.input_mode,
            time_limit_ms: spec.time_limit_ms(),
        }
    }
}

impl SimTarget {
    /// Recover the mode from the capture devices a descriptor enables.
    pub fn from_descriptor(d: &RecordingDescriptor) -> Option<Self> {
        let input_mode = match (d.canvas, d.camera, d.microphone) {
            (true, false, false) => InputMode::InkOnly,
            (false, false, true) => InputMode::AudioOnly,
            (false, true, _) => InputMode::VideoOnly,
            (true, false, true) => InputMode::InkAudio,
            (true, true, _) => InputMode::InkVideo,
            _ => return None,
        };
        Some(SimTarget {
            exercise_id: d.exercise_id,
            input_mode,
            time_limit_ms: u64::from(d.time_limit_s) * 1000,
        })
    }
}

/// One synthetic student's response and its intended properties.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentPlan {
    pub index: usize,
    pub display_name: String,
    pub duration_ms: u64,
    pub ratings: Ratings,
    pub real_ink: bool,
    pub silent: bool,
    pub ink: Option<Vec<u8>>,
    pub audio: Option<Vec<u8>>,
    pub video: Option<Vec<u8>>,
    pub poster: Option<Vec<u8>>,
    pub declared_duration_ms: Option<u64>,
}

impl StudentPlan {
    /// Labels post-processing should assign.
    pub fn expected_labels(&self, mode: InputMode) -> Vec<Label> {
        let mut labels = Vec::new();
        if mode.audio_enabled() && self.silent {
            labels.push(Label::NoAudio);
        }
        if mode.ink_enabled() && !self.real_ink {
            labels.push(Label::NoInk);
        }
        labels
    }
}

pub fn student_name(seed: u64, index: usize) -> String {
    format!("Sim {seed:x} {index:03}")
}

fn rng_for(seed: u64, index: usize, exercise: &SimTarget) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ exercise.exercise_id.0.rotate_left(32));
    rng.set_stream(index as u64);
    rng
}

fn ink_stream(rng: &mut ChaCha8Rng, duration_ms: u64) -> InkStream {
    let strokes = rng.random_range(1..=4usize);
    let mut events = Vec::new();
    let slot = duration_ms / strokes as u64;
    for s in 0..strokes {
        let start = slot * s as u64;
        if rng.random_bool(0.3) {
            let rgba = [rng.random(), rng.random(), rng.random(), 255];
            events.push(InkEvent::style(start, rgba, rng.random_range(0.002..0.02)));
        }
        let points = rng.random_range(2..=12usize);
        let step = slot / (points as u64 + 1);
        let mut x = rng.random_range(0.1..0.9);
        let mut y = rng.random_range(0.1..0.9);
        events.push(InkEvent::down(start, x, y));
        for p in 1..points {
            x = (x + rng.random_range(-0.08..0.08f64)).clamp(0.0, 1.0);
            y = (y + rng.random_range(-0.08..0.08f64)).clamp(0.0, 1.0);
            if p == 1 {
                x = (x + 0.02).min(1.0);
            }
            events.push(InkEvent::moved(start + step * p as u64, x, y));
        }
        events.push(InkEvent::up(start + step * points as u64));
    }
    InkStream::new(events, duration_ms).expect("generated streams are valid")
}

fn audio(rng: &mut ChaCha8Rng, duration_ms: u64, silent: bool) -> Vec<u8> {
    let n = (duration_ms * u64::from(SAMPLE_RATE_HZ) / 1000) as usize;
    let samples = if silent {
        vec![0i16; n]
    } else {
        let freq = rng.random_range(180.0..900.0f64);
        let amp = rng.random_range(0.1..0.8f64);
        (0..n)
            .map(|i| (amp * 32767.0 * (2.0 * PI * freq * i as f64 / f64::from(SAMPLE_RATE_HZ)).sin()).round() as i16)
            .collect()
    };
    encode_wav(&AudioTrack::new(samples, SAMPLE_RATE_HZ).expect("supported rate"))
}

fn poster(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let color = Rgba([rng.random(), rng.random(), rng.random(), 255]);
    encode_png(&RgbaImage::from_pixel(64, 48, color))
}

/// The response student `index` submits to `exercise`.
pub fn plan_student(profile: &SimProfile, exercise: &SimTarget, index: usize) -> StudentPlan {
    let mut rng = rng_for(profile.seed, index, exercise);
    let mode = exercise.input_mode;
    let (lo, hi) = profile.duration_range_ms;
    let duration_ms = rng.random_range(lo..=hi).clamp(1, exercise.time_limit_ms);
    let ratings = Ratings {
        confidence: rng.random_range(1..=5),
        helpfulness: rng.random_range(1..=5),
    };
    let real_ink = rng.random_bool(profile.ink_prob);
    let silent = rng.random_bool(profile.silence_prob);

    let ink = mode.ink_enabled().then(|| {
        if real_ink {
            ink_stream(&mut rng, duration_ms).to_json()
        } else {
            InkStream::empty(duration_ms).to_json()
        }
    });
    let audio = mode.audio_enabled().then(|| audio(&mut rng, duration_ms, silent));
    let (video, poster, declared_duration_ms) = if mode.video_enabled() {
        let mut bytes = b"\x1aE\xdf\xa3".to_vec();
        bytes.extend((0..2048).map(|_| rng.random::<u8>()));
        (Some(bytes), Some(poster(&mut rng)), Some(duration_ms))
    } else {
        (None, None, None)
    };
    StudentPlan {
        index,
        display_name: student_name(profile.seed, index),
        duration_ms,
        ratings,
        real_ink: mode.ink_enabled() && real_ink,
        silent: mode.audio_enabled() && silent,
        ink,
        audio,
        video,
        poster,
        declared_duration_ms,
    }
}

pub fn plan_population(profile: &SimProfile, exercise: &SimTarget) -> Vec<StudentPlan> {
    (0..profile.n_students)
        .map(|i| plan_student(profile, exercise, i))
        .collect()
}
