//! The two emotion classifiers (a small CNN and a PCA→LDA Gaussian
//! discriminant baseline), their shared label/score types, evaluation, and
//! the on-disk dataset layout.

mod cnn;
mod dataset;
mod eval;
mod labels;
mod lda;
pub mod linalg;
mod pca;

pub use cnn::{cnn_train, cnn_train_with, CnnModel, EpochStats, TrainConfig};
pub use dataset::{load_dataset_dir, write_dataset_dir, LabeledRoi};
pub use eval::{evaluate, EmotionClassifier, Evaluation};
pub use labels::{format_score_report, EmotionLabel, EmotionScores};
pub use lda::{default_lambda, lda_fit, lda_posterior, LdaConfig, LdaModel, LdaParams};
pub use pca::{pca_fit, Pca};

use std::path::PathBuf;

use thiserror::Error;

use crate::nn::NnError;
use crate::preprocess::PreprocessError;
use crate::vision::VisionError;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no training samples for label {0}")]
    EmptyClass(EmotionLabel),
    #[error("class {class} has {count} samples, at least 2 are needed")]
    ClassTooSmall { class: usize, count: usize },
    #[error("covariance is all zero; data carries no variance")]
    DegenerateData,
    #[error("target dimension {requested} outside [1, {max}]")]
    InvalidDimension { requested: usize, max: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown emotion label {0:?}")]
    UnknownLabel(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: VisionError },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

pub type Result<T> = std::result::Result<T, ClassifyError>;
