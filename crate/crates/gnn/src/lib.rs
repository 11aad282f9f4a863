//! Message-passing models over formula factor graphs, with a small
//! reverse-mode tensor engine, training loop and evaluation tools.

pub mod checkpoint;
pub mod data;
pub mod experiments;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod tape;
pub mod tensor;
pub mod train;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: index {index} out of range for {len} rows")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("tape has already been differentiated")]
    TapeConsumed,
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("replayed ReLU pattern does not match the recorded graph")]
    PatternMismatch,
}

pub use tape::{Gradients, NodeId, Tape};
pub use tensor::{Scalar, Tensor};
