//! Minimal tensors with reverse-mode differentiation: dilated 1D
//! convolutions with circular or zero padding, dense layers, the usual
//! pointwise ops and reductions, metric losses, Adam and weight files.

mod checkpoint;
mod conv;
pub mod gradcheck;
mod graph;
mod loss;
mod params;
mod scalar;

use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use conv::{conv1d_backward, conv1d_forward, ConvGrads, ConvSpec, Padding};
pub use graph::{Gradients, Graph, NodeId};
pub use loss::{
    bce_loss, circle_loss, circle_loss_from_similarities, triplet_loss, CircleParams, BCE_CLAMP, TRIPLET_MARGIN,
};
pub use params::{Adam, AdamConfig, GradBuffer, ParamId, ParamStore, Parameter};
pub use scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch (expected {expected:?}, found {found:?})")]
    ShapeMismatch { op: &'static str, expected: Vec<usize>, found: Vec<usize> },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("backward needs a single-element root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
}
