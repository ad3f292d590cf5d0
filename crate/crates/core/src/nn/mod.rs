//! Dense tensors and a fixed-layer neural network engine: convolution,
//! 2×2 max-pooling, fully connected layers, sigmoid activations and a
//! softmax/cross-entropy head, trained with plain minibatch SGD.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and inference and in `f64` for finite-difference verification.

mod gradcheck;
mod network;
mod ops;
mod tensor;

pub use gradcheck::{compare_gradients, gradient_check, GradientReport};
pub use network::{ForwardTrace, LayerSpec, Network};
pub use ops::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2_backward,
    maxpool2_forward, sigmoid, sigmoid_derivative, sigmoid_scalar, softmax,
    softmax_cross_entropy, PoolMask, SoftmaxLoss,
};
pub use tensor::{Real, Tensor};
pub(crate) use network::argmax as network_argmax;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("invalid shape {0:?}: extents must be positive and at most 4 axes")]
    InvalidShape(Vec<usize>),
    #[error("max-pool needs at least a 2x2 input, got {height}x{width}")]
    PoolTooSmall { height: usize, width: usize },
    #[error("class index {class} out of range for {classes} logits")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, NnError>;
