//! Procedural stand-ins for face images: one anti-aliased glyph per emotion
//! label, with per-sample jitter, used for toy training runs and generated
//! test streams.

use crate::classify::{EmotionLabel, LabeledRoi};
use crate::preprocess::BoundingBox;
use crate::rng::XorShift64;
use crate::vision::Frame;

/// Per-sample rendering parameters. Lengths are in units of half the glyph
/// side, so a style renders alike at any size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlyphStyle {
    pub shift_x: f64,
    pub shift_y: f64,
    pub scale: f64,
    pub half_width: f64,
    pub foreground: f64,
    pub background: f64,
    pub noise: f64,
    pub noise_seed: u64,
}

impl GlyphStyle {
    pub fn plain() -> Self {
        GlyphStyle {
            shift_x: 0.0,
            shift_y: 0.0,
            scale: 1.0,
            half_width: 0.11,
            foreground: 230.0,
            background: 20.0,
            noise: 0.0,
            noise_seed: 0,
        }
    }

    /// Shift up to ±1.5 px at 28 px, scale 0.85–1.1, stroke and level
    /// variation, uniform noise up to ±12 grey levels.
    pub fn random(rng: &mut XorShift64) -> Self {
        let px = 2.0 / 28.0;
        GlyphStyle {
            shift_x: rng.uniform(-1.5, 1.5) * px,
            shift_y: rng.uniform(-1.5, 1.5) * px,
            scale: rng.uniform(0.85, 1.1),
            half_width: rng.uniform(0.08, 0.14),
            foreground: rng.uniform(170.0, 255.0),
            background: rng.uniform(0.0, 60.0),
            noise: rng.uniform(0.0, 12.0),
            noise_seed: rng.next_u64(),
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (cx * cx + cy * cy).sqrt()
}

fn segments_distance(p: (f64, f64), segs: &[((f64, f64), (f64, f64))]) -> f64 {
    segs.iter().map(|&(a, b)| segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
}

/// Distance from `p` to the glyph's centre line, or signed distance to the
/// boundary of a filled glyph (second field `true`), in glyph units.
fn glyph_distance(label: EmotionLabel, p: (f64, f64)) -> (f64, bool) {
    match label {
        EmotionLabel::Angry => (
            segments_distance(p, &[((-0.6, -0.6), (0.6, 0.6)), ((-0.6, 0.6), (0.6, -0.6))]),
            false,
        ),
        EmotionLabel::Disgust => (
            segments_distance(p, &[((-0.6, -0.35), (0.6, -0.35)), ((-0.6, 0.35), (0.6, 0.35))]),
            false,
        ),
        EmotionLabel::Scared => (((p.0 * p.0 + p.1 * p.1).sqrt() - 0.55).abs(), false),
        EmotionLabel::Happy => {
            let qx = p.0.abs() - 0.5;
            let qy = p.1.abs() - 0.5;
            let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
            (outside + qx.max(qy).min(0.0), true)
        }
        EmotionLabel::Sad => (
            segments_distance(
                p,
                &[((0.0, -0.6), (0.6, 0.5)), ((0.6, 0.5), (-0.6, 0.5)), ((-0.6, 0.5), (0.0, -0.6))],
            ),
            false,
        ),
        EmotionLabel::Surprised => (
            segments_distance(p, &[((-0.65, 0.0), (0.65, 0.0)), ((0.0, -0.65), (0.0, 0.65))]),
            false,
        ),
        EmotionLabel::Neutral => (segments_distance(p, &[((0.0, -0.65), (0.0, 0.65))]), false),
    }
}

/// Renders a `width × height` glyph image (row-major luma).
pub fn render_glyph(label: EmotionLabel, width: usize, height: usize, style: &GlyphStyle) -> Vec<u8> {
    let half = 0.5 * width.min(height) as f64;
    let pixel = 1.0 / half;
    let mut noise = XorShift64::new(style.noise_seed);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let u = ((x as f64 + 0.5) - 0.5 * width as f64) / half;
            let v = ((y as f64 + 0.5) - 0.5 * height as f64) / half;
            let p = ((u - style.shift_x) / style.scale, (v - style.shift_y) / style.scale);
            let (dist, filled) = glyph_distance(label, p);
            let edge = if filled { dist } else { dist - style.half_width };
            // one-pixel linear ramp across the edge
            let coverage = (0.5 - edge * style.scale / pixel).clamp(0.0, 1.0);
            let mut value = style.background + (style.foreground - style.background) * coverage;
            if style.noise > 0.0 {
                value += noise.uniform(-style.noise, style.noise);
            }
            out.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Paints a glyph over the `bbox` region of `frame` (clipped to the frame).
pub fn draw_glyph(frame: &mut Frame, bbox: &BoundingBox, label: EmotionLabel, style: &GlyphStyle) {
    let (w, h) = (bbox.w as usize, bbox.h as usize);
    let glyph = render_glyph(label, w, h, style);
    let fw = frame.width();
    let fh = frame.height();
    let luma = frame.luma_mut();
    for gy in 0..h {
        let y = bbox.y as usize + gy;
        if y >= fh {
            break;
        }
        for gx in 0..w {
            let x = bbox.x as usize + gx;
            if x >= fw {
                break;
            }
            luma[y * fw + x] = glyph[gy * w + gx];
        }
    }
}

/// Jittered glyph samples, `per_class` of each label in label order.
pub fn glyph_samples(per_class: usize, size: usize, seed: u64) -> Vec<LabeledRoi> {
    let mut rng = XorShift64::new(seed);
    let mut out = Vec::with_capacity(per_class * EmotionLabel::COUNT);
    for label in EmotionLabel::ALL {
        for _ in 0..per_class {
            let style = GlyphStyle::random(&mut rng);
            let luma = render_glyph(label, size, size, &style);
            let frame = Frame::new(0, size, size, luma).expect("glyph dimensions");
            out.push(LabeledRoi::from_frame(label, &frame, size).expect("full-frame roi"));
        }
    }
    out
}

/// Per-class shuffle, then the first `train_fraction` of each class goes to
/// the training split.
pub fn stratified_split(
    samples: Vec<LabeledRoi>,
    train_fraction: f64,
    seed: u64,
) -> (Vec<LabeledRoi>, Vec<LabeledRoi>) {
    let mut rng = XorShift64::new(seed.rotate_left(17));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in EmotionLabel::ALL {
        let mut class: Vec<LabeledRoi> = samples.iter().filter(|s| s.label == label).cloned().collect();
        rng.shuffle(&mut class);
        let cut = (class.len() as f64 * train_fraction).round() as usize;
        let rest = class.split_off(cut);
        train.extend(class);
        test.extend(rest);
    }
    (train, test)
}

/// The toy experiment's data: 200 glyphs per class at 28 px, split 80/20.
pub fn toy_dataset(seed: u64) -> (Vec<LabeledRoi>, Vec<LabeledRoi>) {
    stratified_split(glyph_samples(200, 28, seed), 0.8, seed)
}
