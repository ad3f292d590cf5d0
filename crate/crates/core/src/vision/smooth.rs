use super::{Frame, Result, VisionError};

/// Per-pixel median over a window of 1, 3 or 5 frames. The result carries
/// the index of the centre frame.
pub fn temporal_smooth(window: &[Frame]) -> Result<Frame> {
    let k = window.len();
    if !matches!(k, 1 | 3 | 5) {
        return Err(VisionError::InvalidWindow(k));
    }
    let centre = &window[k / 2];
    let (w, h) = (centre.width(), centre.height());
    for f in window {
        if f.width() != w || f.height() != h {
            return Err(VisionError::DimensionMismatch(w, h, f.width(), f.height()));
        }
    }
    if k == 1 {
        return Ok(centre.clone());
    }
    let mut samples = [0u8; 5];
    let luma = (0..w * h)
        .map(|p| {
            for (s, f) in samples.iter_mut().zip(window) {
                *s = f.luma()[p];
            }
            let s = &mut samples[..k];
            s.sort_unstable();
            s[k / 2]
        })
        .collect();
    Frame::new(centre.index, w, h, luma)
}
