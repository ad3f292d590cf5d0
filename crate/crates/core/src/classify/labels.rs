use std::fmt;
use std::str::FromStr;

use super::{ClassifyError, Result};

/// The seven emotion classes. The discriminants are the class indices used
/// by every model and file format and must never be reordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum EmotionLabel {
    Angry = 0,
    Disgust = 1,
    Scared = 2,
    Happy = 3,
    Sad = 4,
    Surprised = 5,
    Neutral = 6,
}

impl EmotionLabel {
    pub const COUNT: usize = 7;

    pub const ALL: [EmotionLabel; 7] = [
        EmotionLabel::Angry,
        EmotionLabel::Disgust,
        EmotionLabel::Scared,
        EmotionLabel::Happy,
        EmotionLabel::Sad,
        EmotionLabel::Surprised,
        EmotionLabel::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Angry => "angry",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Scared => "scared",
            EmotionLabel::Happy => "happy",
            EmotionLabel::Sad => "sad",
            EmotionLabel::Surprised => "surprised",
            EmotionLabel::Neutral => "neutral",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| ClassifyError::UnknownLabel(s.to_string()))
    }
}

/// Probability vector over [`EmotionLabel::ALL`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionScores {
    probs: [f64; 7],
}

impl EmotionScores {
    /// Accepts a probability vector: components in `[0, 1]`, sum 1 ± 1e-9.
    pub fn new(probs: &[f64]) -> Result<Self> {
        let probs: [f64; 7] = probs.try_into().map_err(|_| {
            ClassifyError::InvalidArgument(format!("expected 7 scores, got {}", probs.len()))
        })?;
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
            return Err(ClassifyError::InvalidArgument(format!(
                "not a probability vector (sum {sum})"
            )));
        }
        Ok(Self { probs })
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(weights: [f64; 7]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || sum <= 0.0 {
            return Err(ClassifyError::InvalidArgument(
                "weights must be finite, nonnegative and not all zero".into(),
            ));
        }
        Ok(Self {
            probs: weights.map(|w| w / sum),
        })
    }

    pub fn uniform() -> Self {
        Self {
            probs: [1.0 / 7.0; 7],
        }
    }

    pub fn probs(&self) -> &[f64; 7] {
        &self.probs
    }

    pub fn get(&self, label: EmotionLabel) -> f64 {
        self.probs[label.index()]
    }

    /// Highest-scoring label; ties go to the lowest index.
    pub fn argmax(&self) -> EmotionLabel {
        argmax_label(&self.probs)
    }
}

pub(crate) fn argmax_label(v: &[f64; 7]) -> EmotionLabel {
    EmotionLabel::ALL[crate::nn::network_argmax(v)]
}

/// One `label=NN.NN%` line per label in index order, then `argmax: label`.
/// Takes raw fractions so externally reported vectors that do not sum to one
/// can be rendered unchanged.
pub fn format_score_report(probs: &[f64; 7]) -> String {
    let mut out = String::new();
    for label in EmotionLabel::ALL {
        out.push_str(&format!("{}={:.2}%\n", label, probs[label.index()] * 100.0));
    }
    out.push_str(&format!("argmax: {}\n", argmax_label(probs)));
    out
}
