//! Frame and face-region preparation: working-width resize, primary face
//! selection, ROI crop/rescale/normalize, and the detections sidecar.

mod detections;
mod resize;
mod roi;

pub use detections::{load_detections, DetectionMeta, Detections};
pub use resize::{bilinear_sample, resize_to_width, rgb_to_gray};
pub use roi::{extract_roi, select_primary_face, Roi};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("box {0:?} does not intersect the frame")]
    EmptyIntersection(BoundingBox),
    #[error("roi size must be at least 1")]
    InvalidRoiSize,
    #[error("detections line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("detections line {line}: negative field")]
    NegativeField { line: usize },
    #[error("detections file is not valid UTF-8")]
    NotText,
}

pub type Result<T> = std::result::Result<T, PreprocessError>;

/// Face rectangle `(fX, fY, fW, fH)` in pixels, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    /// Scales position and size by `factor`, rounding to the nearest pixel.
    /// Width and height stay at least 1.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: u32| (v as f64 * factor).round().max(0.0) as u32;
        Self {
            x: s(self.x),
            y: s(self.y),
            w: s(self.w).max(1),
            h: s(self.h).max(1),
        }
    }
}
