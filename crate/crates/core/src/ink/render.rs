//! Deterministic rasterization of ink streams.
//!
//! A pixel belongs to a stroke when its center lies within the stroke radius of
//! any recorded segment, which gives round caps and round joins. Each stroke's
//! coverage is composited once with source-over, so overlapping segments of one
//! translucent stroke do not darken. Nothing is interpolated between events.

use image::{Rgba, RgbaImage};
use thiserror::Error;

use super::{InkStream, Stroke};

pub const MAX_CANVAS_SIDE: u32 = 8192;

/// Radius floor in pixels so hairlines stay visible at small sizes.
const MIN_RADIUS_PX: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub w: u32,
    pub h: u32,
}

impl Size {
    pub const fn new(w: u32, h: u32) -> Self {
        Size { w, h }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid canvas size {w}x{h}")]
pub struct InvalidSize {
    pub w: u32,
    pub h: u32,
}

impl InvalidSize {
    pub fn code(&self) -> &'static str {
        "invalid-size"
    }
}

fn check(size: Size) -> Result<(), InvalidSize> {
    if size.w == 0 || size.h == 0 || size.w > MAX_CANVAS_SIDE || size.h > MAX_CANVAS_SIDE {
        Err(InvalidSize { w: size.w, h: size.h })
    } else {
        Ok(())
    }
}

/// Source-over compositing of one RGBA pixel onto another.
pub(crate) fn over(src: [u8; 4], dst: [u8; 4]) -> [u8; 4] {
    let sa = f64::from(src[3]) / 255.0;
    let da = f64::from(dst[3]) / 255.0;
    let oa = sa + da * (1.0 - sa);
    if oa <= 0.0 {
        return [0, 0, 0, 0];
    }
    let mut out = [0u8; 4];
    for c in 0..3 {
        let v = (f64::from(src[c]) * sa + f64::from(dst[c]) * da * (1.0 - sa)) / oa;
        out[c] = v.round().clamp(0.0, 255.0) as u8;
    }
    out[3] = (oa * 255.0).round().clamp(0.0, 255.0) as u8;
    out
}

/// Squared distance from `p` to the segment `a`-`b`.
pub(crate) fn dist2_to_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let dx = bx - ax;
    let dy = by - ay;
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let cx = ax + t * dx;
    let cy = ay + t * dy;
    (px - cx) * (px - cx) + (py - cy) * (py - cy)
}

pub(crate) fn stroke_radius(width: f64, size: Size) -> f64 {
    (width * f64::from(size.w.min(size.h)) / 2.0).max(MIN_RADIUS_PX)
}

fn cover_segment(mask: &mut [bool], size: Size, a: (f64, f64), b: (f64, f64), r: f64) {
    let (w, h) = (size.w as i64, size.h as i64);
    let x0 = ((a.0.min(b.0) - r - 0.5).floor() as i64).max(0);
    let x1 = ((a.0.max(b.0) + r - 0.5).ceil() as i64).min(w - 1);
    let y0 = ((a.1.min(b.1) - r - 0.5).floor() as i64).max(0);
    let y1 = ((a.1.max(b.1) + r - 0.5).ceil() as i64).min(h - 1);
    let r2 = r * r;
    for iy in y0..=y1 {
        let py = iy as f64 + 0.5;
        for ix in x0..=x1 {
            let px = ix as f64 + 0.5;
            if dist2_to_segment(px, py, a.0, a.1, b.0, b.1) <= r2 {
                mask[(iy * w + ix) as usize] = true;
            }
        }
    }
}

fn draw_stroke(layer: &mut RgbaImage, size: Size, stroke: &Stroke) {
    let scale = |&(x, y): &(f64, f64)| (x * f64::from(size.w), y * f64::from(size.h));
    let points: Vec<(f64, f64)> = stroke.points.iter().map(scale).collect();
    let r = stroke_radius(stroke.style.width, size);
    let mut mask = vec![false; (size.w as usize) * (size.h as usize)];
    if points.len() == 1 {
        cover_segment(&mut mask, size, points[0], points[0], r);
    }
    for pair in points.windows(2) {
        cover_segment(&mut mask, size, pair[0], pair[1], r);
    }
    for (i, covered) in mask.iter().enumerate() {
        if *covered {
            let x = (i % size.w as usize) as u32;
            let y = (i / size.w as usize) as u32;
            let px = layer.get_pixel_mut(x, y);
            px.0 = over(stroke.style.rgba, px.0);
        }
    }
}

/// Ink drawn up to `t_ms` on a transparent canvas.
pub fn render_layer(stream: &InkStream, t_ms: u64, size: Size) -> Result<RgbaImage, InvalidSize> {
    check(size)?;
    let mut layer = RgbaImage::new(size.w, size.h);
    for stroke in stream.strokes_prefix(stream.visible_count(t_ms)) {
        draw_stroke(&mut layer, size, &stroke);
    }
    Ok(layer)
}

/// Composite `layer` over `base`; both must have the same dimensions.
pub fn composite_over(layer: &RgbaImage, base: &RgbaImage) -> RgbaImage {
    assert_eq!(layer.dimensions(), base.dimensions(), "composite of mismatched sizes");
    let mut out = base.clone();
    for (dst, src) in out.pixels_mut().zip(layer.pixels()) {
        dst.0 = over(src.0, dst.0);
    }
    out
}

/// The canvas as it looked at `t_ms`, on a white background.
pub fn render_at(stream: &InkStream, t_ms: u64, size: Size) -> Result<RgbaImage, InvalidSize> {
    let layer = render_layer(stream, t_ms, size)?;
    let white = RgbaImage::from_pixel(size.w, size.h, Rgba([255, 255, 255, 255]));
    Ok(composite_over(&layer, &white))
}

pub fn final_frame(stream: &InkStream, size: Size) -> Result<RgbaImage, InvalidSize> {
    render_at(stream, stream.duration_ms(), size)
}
