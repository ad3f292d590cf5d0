//! Grayscale frame ingestion: YUV4MPEG2 streams, binary PGM images and a
//! temporal median filter.

mod pgm;
mod smooth;
mod y4m;

pub use pgm::{parse_pgm, write_pgm};
pub use smooth::temporal_smooth;
pub use y4m::{parse_y4m_header, Chroma, VideoHeader, Y4mReader, Y4mWriter};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("stream does not start with the YUV4MPEG2 signature")]
    MissingSignature,
    #[error("malformed or missing {tag} tag in stream header")]
    MalformedTag { tag: char },
    #[error("unsupported chroma mode {0:?} (only mono and 420 are handled)")]
    UnsupportedChroma(String),
    #[error("stream header line is not terminated")]
    TruncatedHeader,
    #[error("header line exceeds {0} bytes")]
    HeaderTooLong(usize),
    #[error("frame {index}: expected {expected} bytes, stream ended after {got}")]
    TruncatedFrame {
        index: u64,
        expected: usize,
        got: usize,
    },
    #[error("frame {index}: malformed FRAME marker")]
    MalformedFrameMarker { index: u64 },
    #[error("not a binary PGM (P5) image")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    MalformedHeader(&'static str),
    #[error("PGM maxval {0} unsupported (only 255)")]
    MaxvalUnsupported(u32),
    #[error("PGM pixel data truncated: expected {expected} bytes, got {got}")]
    TruncatedPixels { expected: usize, got: usize },
    #[error("frame luma length {len} does not match {width}x{height}")]
    LumaLength {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("frame dimensions differ within smoothing window: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("smoothing window must be 1, 3 or 5 frames, got {0}")]
    InvalidWindow(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VisionError>;

/// One decoded grayscale frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// 0-based position in its stream.
    pub index: u64,
    width: usize,
    height: usize,
    luma: Vec<u8>,
}

impl Frame {
    pub fn new(index: u64, width: usize, height: usize, luma: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || luma.len() != width * height {
            return Err(VisionError::LumaLength {
                width,
                height,
                len: luma.len(),
            });
        }
        Ok(Self {
            index,
            width,
            height,
            luma,
        })
    }

    pub fn filled(index: u64, width: usize, height: usize, value: u8) -> Self {
        Self::new(index, width, height, vec![value; width * height]).expect("nonzero size")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn luma(&self) -> &[u8] {
        &self.luma
    }

    pub fn luma_mut(&mut self) -> &mut [u8] {
        &mut self.luma
    }

    pub fn into_luma(self) -> Vec<u8> {
        self.luma
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.luma[y * self.width + x]
    }
}
