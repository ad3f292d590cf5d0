use std::fs;
use std::path::Path;

use crate::preprocess::{extract_roi, BoundingBox, Roi};
use crate::vision::{parse_pgm, write_pgm, Frame};

use super::{ClassifyError, EmotionLabel, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRoi {
    pub label: EmotionLabel,
    pub roi: Roi,
}

impl LabeledRoi {
    /// Whole image rescaled to `roi_size²`.
    pub fn from_frame(label: EmotionLabel, frame: &Frame, roi_size: usize) -> Result<Self> {
        let full = BoundingBox::new(0, 0, frame.width() as u32, frame.height() as u32);
        Ok(LabeledRoi { label, roi: extract_roi(frame, &full, roi_size)? })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ClassifyError + '_ {
    move |source| ClassifyError::Io { path: path.to_path_buf(), source }
}

/// Reads `<dir>/<label>/*.pgm` for all seven labels, in label order and then
/// file-name order. A missing label directory is an [`ClassifyError::EmptyClass`].
pub fn load_dataset_dir(dir: &Path, roi_size: usize) -> Result<Vec<LabeledRoi>> {
    if !dir.is_dir() {
        return Err(ClassifyError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let mut out = Vec::new();
    for label in EmotionLabel::ALL {
        let sub = dir.join(label.name());
        if !sub.is_dir() {
            return Err(ClassifyError::EmptyClass(label));
        }
        let mut files: Vec<_> = fs::read_dir(&sub)
            .map_err(io_err(&sub))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
            .collect();
        files.sort();
        for path in files {
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let frame = parse_pgm(&bytes)
                .map_err(|source| ClassifyError::Image { path: path.clone(), source })?;
            out.push(LabeledRoi::from_frame(label, &frame, roi_size)?);
        }
    }
    Ok(out)
}

/// Writes each sample as `<dir>/<label>/NNNNN.pgm`, quantizing to 8 bits.
pub fn write_dataset_dir(dir: &Path, samples: &[LabeledRoi]) -> Result<()> {
    let mut counters = [0usize; EmotionLabel::COUNT];
    for label in EmotionLabel::ALL {
        let sub = dir.join(label.name());
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
    }
    for sample in samples {
        let side = sample.roi.side();
        let luma = sample
            .roi
            .pixels()
            .iter()
            .map(|&v| (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let frame = Frame::new(0, side, side, luma)
            .map_err(|source| ClassifyError::Image { path: dir.to_path_buf(), source })?;
        let n = &mut counters[sample.label.index()];
        let path = dir.join(sample.label.name()).join(format!("{:05}.pgm", *n));
        *n += 1;
        fs::write(&path, write_pgm(&frame)).map_err(io_err(&path))?;
    }
    Ok(())
}
