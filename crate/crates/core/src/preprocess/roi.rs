use std::cmp::Reverse;

use super::{bilinear_sample, BoundingBox, PreprocessError, Result};
use crate::nn::Tensor;
use crate::vision::Frame;

/// Square face crop normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    side: usize,
    pixels: Vec<f32>,
}

impl Roi {
    pub fn new(side: usize, pixels: Vec<f32>) -> Result<Self> {
        if side == 0 || pixels.len() != side * side {
            return Err(PreprocessError::InvalidRoiSize);
        }
        Ok(Self { side, pixels })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    /// `side×side×1` network input.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(&[self.side, self.side, 1], self.pixels.clone()).expect("square roi")
    }
}

/// Largest-area box; equal areas go to the smaller `(fY, fX)`, then the
/// narrower box, so the choice does not depend on input order.
pub fn select_primary_face(boxes: &[BoundingBox]) -> Option<BoundingBox> {
    boxes
        .iter()
        .max_by_key(|b| (b.area(), Reverse(b.y), Reverse(b.x), Reverse(b.w)))
        .copied()
}

/// Crops `frame[fY..fY+fH, fX..fX+fW]` (clamped to the frame), resizes the
/// crop bilinearly to `roi_size²` and divides by 255.
pub fn extract_roi(frame: &Frame, bbox: &BoundingBox, roi_size: usize) -> Result<Roi> {
    if roi_size == 0 {
        return Err(PreprocessError::InvalidRoiSize);
    }
    let (fw, fh) = (frame.width(), frame.height());
    let x0 = (bbox.x as usize).min(fw);
    let y0 = (bbox.y as usize).min(fh);
    let x1 = (bbox.x as usize + bbox.w as usize).min(fw);
    let y1 = (bbox.y as usize + bbox.h as usize).min(fh);
    if x1 <= x0 || y1 <= y0 {
        return Err(PreprocessError::EmptyIntersection(*bbox));
    }
    let (cw, ch) = (x1 - x0, y1 - y0);
    let mut crop = Vec::with_capacity(cw * ch);
    for y in y0..y1 {
        crop.extend_from_slice(&frame.luma()[y * fw + x0..y * fw + x1]);
    }
    let pixels = bilinear_sample(&crop, cw, ch, roi_size, roi_size)
        .into_iter()
        .map(|v| ((v / 255.0) as f32).clamp(0.0, 1.0))
        .collect();
    Roi::new(roi_size, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64;
    use proptest::prelude::*;

    #[test]
    fn larger_area_wins() {
        let boxes = [BoundingBox::new(0, 0, 10, 10), BoundingBox::new(5, 5, 60, 60)];
        assert_eq!(select_primary_face(&boxes), Some(boxes[1]));
        assert_eq!(select_primary_face(&[]), None);
    }

    #[test]
    fn equal_area_tie_rule_by_enumeration() {
        // every ordering of these equal-area boxes must pick (fY, fX) = (2, 1)
        let boxes = [
            BoundingBox::new(9, 2, 20, 20),
            BoundingBox::new(1, 2, 20, 20),
            BoundingBox::new(0, 5, 20, 20),
            BoundingBox::new(3, 3, 40, 10),
        ];
        let mut idx = [0usize, 1, 2, 3];
        let mut perms = 0;
        permute(&mut idx, 0, &mut |p| {
            let ordered: Vec<_> = p.iter().map(|&i| boxes[i]).collect();
            assert_eq!(select_primary_face(&ordered), Some(boxes[1]));
            perms += 1;
        });
        assert_eq!(perms, 24);
    }

    fn permute(v: &mut [usize; 4], k: usize, f: &mut impl FnMut(&[usize; 4])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn uniform_frame_normalizes() {
        let f = Frame::filled(0, 64, 48, 128);
        let roi = extract_roi(&f, &BoundingBox::new(3, 4, 30, 20), 28).unwrap();
        assert_eq!(roi.side(), 28);
        assert!(roi.pixels().iter().all(|&v| v == (128.0f64 / 255.0) as f32));
        assert!((roi.pixels()[0] - 0.50196).abs() < 1e-5);
        let white = Frame::filled(0, 4, 4, 255);
        let roi = extract_roi(&white, &BoundingBox::new(0, 0, 4, 4), 4).unwrap();
        assert!(roi.pixels().iter().all(|&v| v == 1.0));
        let black = Frame::filled(0, 4, 4, 0);
        let roi = extract_roi(&black, &BoundingBox::new(0, 0, 4, 4), 4).unwrap();
        assert!(roi.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clamped_crop_matches_manual_slice() {
        let mut rng = XorShift64::new(9);
        let luma: Vec<u8> = (0..20 * 10).map(|_| rng.next_u64() as u8).collect();
        let f = Frame::new(0, 20, 10, luma.clone()).unwrap();
        // box runs past the right and bottom edges; the crop is 6×3
        let b = BoundingBox::new(14, 7, 50, 50);
        let roi = extract_roi(&f, &b, 6).unwrap();
        // at roi side 6 horizontally the crop maps 1:1; vertically 3 → 6
        let manual: Vec<u8> = (7..10).flat_map(|y| luma[y * 20 + 14..y * 20 + 20].to_vec()).collect();
        let reference = bilinear_sample(&manual, 6, 3, 6, 6);
        for (a, b) in roi.pixels().iter().zip(&reference) {
            assert!((*a as f64 - b / 255.0).abs() < 1e-6);
        }
        for x in 0..6 {
            assert!((roi.pixels()[x] as f64 - manual[x] as f64 / 255.0).abs() < 1e-6);
        }
    }

    #[test]
    fn outside_box_is_rejected() {
        let f = Frame::filled(0, 10, 10, 0);
        let b = BoundingBox::new(10, 0, 5, 5);
        assert_eq!(extract_roi(&f, &b, 28), Err(PreprocessError::EmptyIntersection(b)));
        assert_eq!(
            extract_roi(&f, &BoundingBox::new(0, 0, 5, 5), 0),
            Err(PreprocessError::InvalidRoiSize)
        );
    }

    /// Independent crop → resize → scale with explicit per-pixel weights.
    fn naive_roi(f: &Frame, b: &BoundingBox, side: usize) -> Vec<f64> {
        let x1 = ((b.x + b.w) as usize).min(f.width());
        let y1 = ((b.y + b.h) as usize).min(f.height());
        let (x0, y0) = (b.x as usize, b.y as usize);
        let (cw, ch) = (x1 - x0, y1 - y0);
        let mut out = Vec::new();
        for oy in 0..side {
            for ox in 0..side {
                let sy = ((oy as f64 + 0.5) * ch as f64 / side as f64 - 0.5).max(0.0).min((ch - 1) as f64);
                let sx = ((ox as f64 + 0.5) * cw as f64 / side as f64 - 0.5).max(0.0).min((cw - 1) as f64);
                let (iy, ix) = (sy.floor() as usize, sx.floor() as usize);
                let (fy, fx) = (sy - iy as f64, sx - ix as f64);
                let mut acc = 0.0;
                for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                    for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                        let yy = (iy + dy).min(ch - 1) + y0;
                        let xx = (ix + dx).min(cw - 1) + x0;
                        acc += wy * wx * f.get(xx, yy) as f64;
                    }
                }
                out.push(acc / 255.0);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn roi_matches_naive_composition(
            seed in any::<u64>(), x in 0u32..30, y in 0u32..20,
            w in 1u32..40, h in 1u32..40, side in 1usize..33,
        ) {
            let mut rng = XorShift64::new(seed);
            let luma: Vec<u8> = (0..32 * 24).map(|_| rng.next_u64() as u8).collect();
            let f = Frame::new(0, 32, 24, luma).unwrap();
            let b = BoundingBox::new(x, y, w, h);
            let roi = extract_roi(&f, &b, side).unwrap();
            let naive = naive_roi(&f, &b, side);
            for (a, n) in roi.pixels().iter().zip(&naive) {
                prop_assert!((*a as f64 - n).abs() < 1e-6);
                prop_assert!((0.0..=1.0).contains(a));
            }
        }

        #[test]
        fn selection_is_order_independent(
            raw in proptest::collection::vec((0u32..50, 0u32..50, 1u32..8, 1u32..8), 0..8),
            seed in any::<u64>(),
        ) {
            let boxes: Vec<_> = raw.iter().map(|&(x, y, w, h)| BoundingBox::new(x, y, w, h)).collect();
            let mut shuffled = boxes.clone();
            XorShift64::new(seed).shuffle(&mut shuffled);
            prop_assert_eq!(select_primary_face(&boxes), select_primary_face(&shuffled));
        }
    }
}
