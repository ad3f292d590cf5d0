use crate::vision::Frame;

/// Bilinear resample of a `sw×sh` byte image to `dw×dh` with half-pixel
/// centres and edge clamping. Returns unrounded values in `[0, 255]`.
pub fn bilinear_sample(src: &[u8], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    assert_eq!(src.len(), sw * sh, "source length");
    let axis = |d: usize, s: usize| -> Vec<(usize, usize, f64)> {
        let scale = s as f64 / d as f64;
        (0..d)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (s - 1) as f64);
                let i0 = pos.floor() as usize;
                let i1 = (i0 + 1).min(s - 1);
                (i0, i1, pos - i0 as f64)
            })
            .collect()
    };
    let xs = axis(dw, sw);
    let ys = axis(dh, sh);
    let mut out = Vec::with_capacity(dw * dh);
    for &(y0, y1, ty) in &ys {
        let r0 = &src[y0 * sw..(y0 + 1) * sw];
        let r1 = &src[y1 * sw..(y1 + 1) * sw];
        for &(x0, x1, tx) in &xs {
            let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
            let top = lerp(r0[x0] as f64, r0[x1] as f64, tx);
            let bottom = lerp(r1[x0] as f64, r1[x1] as f64, tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    out
}

/// Aspect-preserving bilinear resize to `target_width`; the new height is
/// `round(height·target/width)`, at least 1.
pub fn resize_to_width(frame: &Frame, target_width: usize) -> Frame {
    let target_width = target_width.max(1);
    if target_width == frame.width() {
        return frame.clone();
    }
    let h = ((frame.height() as f64 * target_width as f64 / frame.width() as f64).round() as usize)
        .max(1);
    let luma = bilinear_sample(frame.luma(), frame.width(), frame.height(), target_width, h)
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    Frame::new(frame.index, target_width, h, luma).expect("sizes computed above")
}

/// Interleaved RGB to luma with weights 0.299/0.587/0.114.
pub fn rgb_to_gray(index: u64, rgb: &[u8], width: usize, height: usize) -> Option<Frame> {
    if rgb.len() != width * height * 3 {
        return None;
    }
    let luma = rgb
        .chunks_exact(3)
        .map(|p| {
            (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect();
    Frame::new(index, width, height, luma).ok()
}
