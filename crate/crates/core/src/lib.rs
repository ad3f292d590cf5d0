//! Facial-emotion monitoring pipeline.
//!
//! Frames come in through [`vision`] (YUV4MPEG2 streams, binary PGM), face
//! regions are cut and normalized in [`preprocess`], scored over seven emotion
//! labels by one of the models in [`classify`], and fed to the counter state
//! machine in [`alert`]. Alerts leave the process as email through [`smtp`].
//! [`pipeline`] wires the stages together and owns model persistence and the
//! command-line surface.

pub mod alert;
pub mod classify;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod smtp;
pub mod synth;
pub mod vision;

pub use alert::{AlertEvent, AlertMonitor, AlertPolicy};
pub use classify::{CnnModel, EmotionLabel, EmotionScores, LdaModel};
pub use nn::{Network, Tensor};
pub use vision::Frame;
