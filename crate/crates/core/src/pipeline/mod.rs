//! End-to-end wiring: configuration, model persistence, the frame loop and
//! the command implementations behind the `emonet` binary.

mod commands;
mod config;
mod model_file;
mod run;

pub use commands::{cmd_eval, cmd_predict, cmd_run, cmd_synth, cmd_train, ModelKind, RunArgs, TrainArgs};
pub use config::{parse_config_text, DetectionCoords, PipelineConfig};
pub use model_file::{load_model, save_model, write_model_file, Model, ModelFileError, MAGIC, VERSION};
pub use run::{run_stream, RunOutcome};

use std::path::PathBuf;

use thiserror::Error;

use crate::classify::ClassifyError;
use crate::preprocess::PreprocessError;
use crate::vision::VisionError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: ModelFileError },
    #[error("{path}: {source}")]
    Video { path: PathBuf, source: VisionError },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: VisionError },
    #[error("{path}: {source}")]
    Detections { path: PathBuf, source: PreprocessError },
    #[error("frame {index}: {reason}")]
    Frame { index: u64, reason: String },
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

impl PipelineError {
    /// 1 for invalid arguments, configuration or training data; 2 for
    /// unreadable or malformed inputs and other I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) | PipelineError::Config(_) => 1,
            PipelineError::Classify(e) => match e {
                ClassifyError::Io { .. } | ClassifyError::Image { .. } => 2,
                _ => 1,
            },
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| PipelineError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
