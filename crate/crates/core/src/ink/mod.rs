//! Digital-ink event streams.
//!
//! A stream is an ordered list of timestamped pen events. The wire form is a
//! UTF-8 JSON document:
//!
//! ```json
//! {"version":1,"duration_ms":1200,"events":[
//!   {"t":0,"k":"s","style":{"rgba":[200,0,0,255],"w":0.01}},
//!   {"t":10,"k":"d","x":0.1,"y":0.1},
//!   {"t":60,"k":"m","x":0.2,"y":0.2},
//!   {"t":110,"k":"u"}]}
//! ```
//!
//! Coordinates are normalized to the recording canvas. Events must follow the
//! pen state machine: `d` opens a stroke, `m` and `u` need an open stroke, and
//! `s` (style change) is only allowed between strokes.

mod render;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use render::{composite_over, final_frame, render_at, render_layer, InvalidSize, Size, MAX_CANVAS_SIDE};

pub const FORMAT_VERSION: u32 = 1;
pub const MAX_STYLE_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenStyle {
    pub rgba: [u8; 4],
    #[serde(rename = "w")]
    pub width: f64,
}

impl Default for PenStyle {
    fn default() -> Self {
        PenStyle {
            rgba: [0, 0, 0, 255],
            width: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InkAction {
    Down { x: f64, y: f64 },
    Move { x: f64, y: f64 },
    Up,
    SetStyle(PenStyle),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InkEvent {
    pub t_ms: u64,
    pub action: InkAction,
}

impl InkEvent {
    pub fn down(t_ms: u64, x: f64, y: f64) -> Self {
        InkEvent {
            t_ms,
            action: InkAction::Down { x, y },
        }
    }

    pub fn moved(t_ms: u64, x: f64, y: f64) -> Self {
        InkEvent {
            t_ms,
            action: InkAction::Move { x, y },
        }
    }

    pub fn up(t_ms: u64) -> Self {
        InkEvent {
            t_ms,
            action: InkAction::Up,
        }
    }

    pub fn style(t_ms: u64, rgba: [u8; 4], width: f64) -> Self {
        InkEvent {
            t_ms,
            action: InkAction::SetStyle(PenStyle { rgba, width }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InkError {
    #[error("malformed ink document: {0}")]
    MalformedDocument(String),
    #[error("event {index}: {reason}")]
    MalformedSequence { index: usize, reason: &'static str },
    #[error("event {index}: {what} out of range")]
    OutOfRange { index: usize, what: &'static str },
    #[error("event {index}: timestamp goes backwards")]
    NonMonotonicTime { index: usize },
}

impl InkError {
    pub fn code(&self) -> &'static str {
        match self {
            InkError::MalformedDocument(_) => "malformed-document",
            InkError::MalformedSequence { .. } => "malformed-sequence",
            InkError::OutOfRange { .. } => "out-of-range",
            InkError::NonMonotonicTime { .. } => "non-monotonic-time",
        }
    }
}

/// A validated ink stream. Only constructible through [`InkStream::new`] or
/// [`parse_ink_stream`], so every instance satisfies the format invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct InkStream {
    events: Vec<InkEvent>,
    duration_ms: u64,
}

/// One pen-down..pen-up run of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    pub style: PenStyle,
    pub points: Vec<(f64, f64)>,
    pub start_ms: u64,
    pub end_ms: Option<u64>,
}

impl Stroke {
    pub fn is_complete(&self) -> bool {
        self.end_ms.is_some()
    }

    pub fn distinct_points(&self) -> usize {
        let mut n = 0;
        for (i, p) in self.points.iter().enumerate() {
            if !self.points[..i].contains(p) {
                n += 1;
            }
        }
        n
    }
}

fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn validate(events: &[InkEvent], duration_ms: u64) -> Result<(), InkError> {
    let mut open = false;
    let mut last_t = 0u64;
    for (index, event) in events.iter().enumerate() {
        match event.action {
            InkAction::Down { x, y } | InkAction::Move { x, y } => {
                if !in_unit(x) || !in_unit(y) {
                    return Err(InkError::OutOfRange {
                        index,
                        what: "coordinate",
                    });
                }
            }
            InkAction::SetStyle(style) => {
                if !(style.width > 0.0 && style.width <= MAX_STYLE_WIDTH) {
                    return Err(InkError::OutOfRange { index, what: "width" });
                }
            }
            InkAction::Up => {}
        }
        if event.t_ms < last_t {
            return Err(InkError::NonMonotonicTime { index });
        }
        last_t = event.t_ms;
        match (event.action, open) {
            (InkAction::Down { .. }, false) => open = true,
            (InkAction::Down { .. }, true) => {
                return Err(InkError::MalformedSequence {
                    index,
                    reason: "pen-down while a stroke is open",
                })
            }
            (InkAction::Move { .. }, false) => {
                return Err(InkError::MalformedSequence {
                    index,
                    reason: "pen-move with no open stroke",
                })
            }
            (InkAction::Up, false) => {
                return Err(InkError::MalformedSequence {
                    index,
                    reason: "pen-up with no open stroke",
                })
            }
            (InkAction::Up, true) => open = false,
            (InkAction::SetStyle(_), true) => {
                return Err(InkError::MalformedSequence {
                    index,
                    reason: "style change inside a stroke",
                })
            }
            (InkAction::Move { .. }, true) | (InkAction::SetStyle(_), false) => {}
        }
    }
    if let Some(last) = events.last() {
        if last.t_ms > duration_ms {
            return Err(InkError::OutOfRange {
                index: events.len() - 1,
                what: "timestamp past declared duration",
            });
        }
    }
    Ok(())
}

impl InkStream {
    pub fn new(events: Vec<InkEvent>, duration_ms: u64) -> Result<Self, InkError> {
        validate(&events, duration_ms)?;
        Ok(InkStream { events, duration_ms })
    }

    pub fn empty(duration_ms: u64) -> Self {
        InkStream {
            events: Vec::new(),
            duration_ms,
        }
    }

    pub fn events(&self) -> &[InkEvent] {
        &self.events
    }

    pub fn duration_ms(&self) -> u64 {
        self.duration_ms
    }

    /// Number of events with `t_ms <= t`.
    pub fn visible_count(&self, t_ms: u64) -> usize {
        self.events.partition_point(|e| e.t_ms <= t_ms)
    }

    /// Strokes built from the first `count` events. The last stroke may be open.
    pub fn strokes_prefix(&self, count: usize) -> Vec<Stroke> {
        let mut style = PenStyle::default();
        let mut strokes: Vec<Stroke> = Vec::new();
        for event in &self.events[..count] {
            match event.action {
                InkAction::SetStyle(s) => style = s,
                InkAction::Down { x, y } => strokes.push(Stroke {
                    style,
                    points: vec![(x, y)],
                    start_ms: event.t_ms,
                    end_ms: None,
                }),
                InkAction::Move { x, y } => {
                    strokes.last_mut().expect("validated").points.push((x, y));
                }
                InkAction::Up => strokes.last_mut().expect("validated").end_ms = Some(event.t_ms),
            }
        }
        strokes
    }

    pub fn strokes(&self) -> Vec<Stroke> {
        self.strokes_prefix(self.events.len())
    }

    pub fn to_json(&self) -> Vec<u8> {
        serialize_ink_stream(self)
    }
}

/// True iff at least one complete stroke has two or more distinct points.
pub fn has_ink(stream: &InkStream) -> bool {
    stream
        .strokes()
        .iter()
        .any(|s| s.is_complete() && s.distinct_points() >= 2)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    version: u32,
    duration_ms: u64,
    events: Vec<RawEvent>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    t: u64,
    k: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    style: Option<RawStyle>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStyle {
    rgba: [u8; 4],
    w: f64,
}

impl RawEvent {
    fn into_event(self, index: usize) -> Result<InkEvent, InkError> {
        let malformed = |what: &str| InkError::MalformedDocument(format!("event {index}: {what}"));
        let action = match (self.k.as_str(), self.x, self.y, self.style) {
            ("d", Some(x), Some(y), None) => InkAction::Down { x, y },
            ("m", Some(x), Some(y), None) => InkAction::Move { x, y },
            ("u", None, None, None) => InkAction::Up,
            ("s", None, None, Some(s)) => InkAction::SetStyle(PenStyle {
                rgba: s.rgba,
                width: s.w,
            }),
            ("d" | "m", ..) => return Err(malformed("pen-down/move needs x and y only")),
            ("u", ..) => return Err(malformed("pen-up carries no fields")),
            ("s", ..) => return Err(malformed("set-style needs style only")),
            (other, ..) => return Err(malformed(&format!("unknown kind {other:?}"))),
        };
        Ok(InkEvent { t_ms: self.t, action })
    }

    fn from_event(event: &InkEvent) -> Self {
        let (k, x, y, style) = match event.action {
            InkAction::Down { x, y } => ("d", Some(x), Some(y), None),
            InkAction::Move { x, y } => ("m", Some(x), Some(y), None),
            InkAction::Up => ("u", None, None, None),
            InkAction::SetStyle(s) => (
                "s",
                None,
                None,
                Some(RawStyle {
                    rgba: s.rgba,
                    w: s.width,
                }),
            ),
        };
        RawEvent {
            t: event.t_ms,
            k: k.to_string(),
            x,
            y,
            style,
        }
    }
}

pub fn parse_ink_stream(document: &[u8]) -> Result<InkStream, InkError> {
    let raw: RawDocument =
        serde_json::from_slice(document).map_err(|e| InkError::MalformedDocument(e.to_string()))?;
    if raw.version != FORMAT_VERSION {
        return Err(InkError::MalformedDocument(format!(
            "unsupported version {}",
            raw.version
        )));
    }
    let events = raw
        .events
        .into_iter()
        .enumerate()
        .map(|(i, e)| e.into_event(i))
        .collect::<Result<Vec<_>, _>>()?;
    InkStream::new(events, raw.duration_ms)
}

pub fn serialize_ink_stream(stream: &InkStream) -> Vec<u8> {
    let raw = RawDocument {
        version: FORMAT_VERSION,
        duration_ms: stream.duration_ms,
        events: stream.events.iter().map(RawEvent::from_event).collect(),
    };
    serde_json::to_vec(&raw).expect("ink documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_event_stroke() -> InkStream {
        InkStream::new(
            vec![InkEvent::down(0, 0.1, 0.1), InkEvent::moved(50, 0.2, 0.2), InkEvent::up(100)],
            100,
        )
        .unwrap()
    }

    #[test]
    fn empty_document() {
        let s = parse_ink_stream(br#"{"version":1,"duration_ms":0,"events":[]}"#).unwrap();
        assert!(s.events().is_empty());
        assert!(s.strokes().is_empty());
        assert!(!has_ink(&s));
    }

    #[test]
    fn one_stroke_trace() {
        let s = three_event_stroke();
        let strokes = s.strokes();
        assert_eq!(strokes.len(), 1);
        assert_eq!(strokes[0].start_ms, 0);
        assert_eq!(strokes[0].end_ms, Some(100));
        assert_eq!(strokes[0].points, vec![(0.1, 0.1), (0.2, 0.2)]);
        assert!(has_ink(&s));
    }

    #[test]
    fn wire_shape_is_exact() {
        let s = InkStream::new(
            vec![
                InkEvent::style(0, [200, 0, 0, 255], 0.01),
                InkEvent::down(10, 0.1, 0.25),
                InkEvent::up(20),
            ],
            20,
        )
        .unwrap();
        let json = String::from_utf8(s.to_json()).unwrap();
        assert_eq!(
            json,
            r#"{"version":1,"duration_ms":20,"events":[{"t":0,"k":"s","style":{"rgba":[200,0,0,255],"w":0.01}},{"t":10,"k":"d","x":0.1,"y":0.25},{"t":20,"k":"u"}]}"#
        );
        assert_eq!(parse_ink_stream(json.as_bytes()).unwrap(), s);
    }

    #[test]
    fn move_without_stroke() {
        let err = parse_ink_stream(br#"{"version":1,"duration_ms":0,"events":[{"t":0,"k":"m","x":0.5,"y":0.5}]}"#)
            .unwrap_err();
        assert!(matches!(err, InkError::MalformedSequence { index: 0, .. }));
    }

    #[test]
    fn error_classes() {
        let cases: &[(&str, &str)] = &[
            (r#"{"version":1,"duration_ms":5,"events":[{"t":0,"k":"d","x":1.5,"y":0}]}"#, "out-of-range"),
            (r#"{"version":1,"duration_ms":5,"events":[{"t":0,"k":"s","style":{"rgba":[0,0,0,255],"w":0.2}}]}"#, "out-of-range"),
            (r#"{"version":1,"duration_ms":5,"events":[{"t":0,"k":"s","style":{"rgba":[0,0,0,256],"w":0.01}}]}"#, "malformed-document"),
            (r#"{"version":1,"duration_ms":5,"events":[{"t":0,"k":"s","style":{"rgba":[0,0,0,255],"w":0}}]}"#, "out-of-range"),
            (r#"{"version":1,"duration_ms":5,"events":[{"t":3,"k":"d","x":0,"y":0},{"t":2,"k":"u"}]}"#, "non-monotonic-time"),
            (r#"{"version":1,"duration_ms":5,"events":[{"t":9,"k":"d","x":0,"y":0},{"t":9,"k":"u"}]}"#, "out-of-range"),
            (r#"{"version":1,"duration_ms":5,"events":[{"t":0,"k":"d","x":0,"y":0},{"t":1,"k":"d","x":0,"y":0}]}"#, "malformed-sequence"),
            (r#"{"version":1,"duration_ms":5,"events":[{"t":0,"k":"d","x":0,"y":0},{"t":1,"k":"s","style":{"rgba":[0,0,0,255],"w":0.01}}]}"#, "malformed-sequence"),
            (r#"{"version":1,"duration_ms":5,"events":[{"t":0,"k":"u"}]}"#, "malformed-sequence"),
            (r#"{"version":1,"duration_ms":5,"events":[{"t":0,"k":"u","x":0.1}]}"#, "malformed-document"),
            (r#"{"version":1,"duration_ms":5,"events":[{"t":0,"k":"z"}]}"#, "malformed-document"),
            (r#"{"version":2,"duration_ms":5,"events":[]}"#, "malformed-document"),
            (r#"{"version":1,"duration_ms":-5,"events":[]}"#, "malformed-document"),
            (r#"{"version":1,"events":[]}"#, "malformed-document"),
            (r#"not json"#, "malformed-document"),
        ];
        for (doc, code) in cases {
            let err = parse_ink_stream(doc.as_bytes()).unwrap_err();
            assert_eq!(err.code(), *code, "{doc}: {err}");
        }
    }

    #[test]
    fn open_stroke_at_end_is_valid_but_not_ink() {
        let s = InkStream::new(vec![InkEvent::down(0, 0.1, 0.1), InkEvent::moved(5, 0.3, 0.3)], 10).unwrap();
        assert_eq!(s.strokes().len(), 1);
        assert!(!has_ink(&s));
    }

    #[test]
    fn degenerate_tap_is_not_ink() {
        let s = InkStream::new(vec![InkEvent::down(0, 0.4, 0.4), InkEvent::up(1)], 1).unwrap();
        assert!(!has_ink(&s));
        // Repeated identical points are still one distinct point.
        let s = InkStream::new(
            vec![InkEvent::down(0, 0.4, 0.4), InkEvent::moved(1, 0.4, 0.4), InkEvent::up(2)],
            2,
        )
        .unwrap();
        assert_eq!(s.strokes()[0].distinct_points(), 1);
        assert!(!has_ink(&s));
    }

    #[test]
    fn style_applies_to_following_strokes() {
        let s = InkStream::new(
            vec![
                InkEvent::down(0, 0.1, 0.1),
                InkEvent::up(1),
                InkEvent::style(2, [1, 2, 3, 4], 0.05),
                InkEvent::down(3, 0.2, 0.2),
                InkEvent::up(4),
            ],
            4,
        )
        .unwrap();
        let strokes = s.strokes();
        assert_eq!(strokes[0].style, PenStyle::default());
        assert_eq!(strokes[1].style.rgba, [1, 2, 3, 4]);
    }
}
