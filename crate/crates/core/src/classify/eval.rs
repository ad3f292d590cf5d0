use std::fmt::Write as _;

use crate::preprocess::Roi;

use super::{ClassifyError, CnnModel, EmotionLabel, EmotionScores, LabeledRoi, LdaModel, Result};

/// Anything that maps an ROI to seven emotion scores.
pub trait EmotionClassifier {
    fn roi_size(&self) -> usize;
    fn classify(&self, roi: &Roi) -> Result<EmotionScores>;
}

impl EmotionClassifier for CnnModel {
    fn roi_size(&self) -> usize {
        CnnModel::roi_size(self)
    }

    fn classify(&self, roi: &Roi) -> Result<EmotionScores> {
        self.predict(roi)
    }
}

impl EmotionClassifier for LdaModel {
    fn roi_size(&self) -> usize {
        LdaModel::roi_size(self)
    }

    fn classify(&self, roi: &Roi) -> Result<EmotionScores> {
        let pixels: Vec<f64> = roi.pixels().iter().map(|&v| v as f64).collect();
        self.predict_pixels(&pixels)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    /// `confusion[true][predicted]`.
    pub confusion: [[u64; 7]; 7],
    pub samples: u64,
}

impl Evaluation {
    pub fn correct(&self) -> u64 {
        (0..7).map(|i| self.confusion[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.samples as f64
    }

    /// Accuracy as a two-decimal percentage followed by the labelled matrix.
    pub fn report(&self) -> String {
        let mut out = format!("accuracy: {:.2}\n", 100.0 * self.accuracy());
        out.push_str("confusion (rows=true, cols=predicted):\n");
        let _ = write!(out, "{:>10}", "");
        for label in EmotionLabel::ALL {
            let _ = write!(out, " {:>9}", label.name());
        }
        out.push('\n');
        for label in EmotionLabel::ALL {
            let _ = write!(out, "{:>10}", label.name());
            for v in self.confusion[label.index()] {
                let _ = write!(out, " {v:>9}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn evaluate<C: EmotionClassifier + ?Sized>(model: &C, data: &[LabeledRoi]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let mut confusion = [[0u64; 7]; 7];
    for sample in data {
        let predicted = model.classify(&sample.roi)?.argmax();
        confusion[sample.label.index()][predicted.index()] += 1;
    }
    Ok(Evaluation { confusion, samples: data.len() as u64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant;

    impl EmotionClassifier for Constant {
        fn roi_size(&self) -> usize {
            2
        }

        fn classify(&self, _: &Roi) -> Result<EmotionScores> {
            let mut p = [0.0; 7];
            p[0] = 1.0;
            EmotionScores::new(&p)
        }
    }

    fn balanced(per_class: usize) -> Vec<LabeledRoi> {
        EmotionLabel::ALL
            .iter()
            .flat_map(|&label| {
                (0..per_class).map(move |_| LabeledRoi { label, roi: Roi::new(2, vec![0.0; 4]).unwrap() })
            })
            .collect()
    }

    #[test]
    fn constant_predictor() {
        let eval = evaluate(&Constant, &balanced(3)).unwrap();
        assert!((eval.accuracy() - 1.0 / 7.0).abs() < 1e-15);
        assert!(eval.report().starts_with("accuracy: 14.29\n"));
        let total: u64 = eval.confusion.iter().flatten().sum();
        assert_eq!(total, 21);
        for row in &eval.confusion {
            assert_eq!(row.iter().sum::<u64>(), 3);
            assert_eq!(row[0], 3);
        }
    }

    #[test]
    fn empty_dataset() {
        assert!(matches!(evaluate(&Constant, &[]), Err(ClassifyError::EmptyDataset)));
    }
}
