//! Minimal reverse-mode automatic differentiation over dense real tensors.
//!
//! The primitive set is deliberately small: matmul (plain and B-transposed),
//! add, scale, tanh, gelu, softmax, layer-norm, embedding gather,
//! cross-entropy, row/column concat and slice, and sum. That is exactly what
//! the toy transformer and causal LM in [`crate::seqmodels`] need, and every
//! backward rule stays short enough to audit by hand.
//!
//! Storage is 32-bit by default; every op is generic over [`Element`] so the
//! same graph can be evaluated at 64-bit for finite-difference checks (see
//! [`check`]).

mod tape;
mod tensor;

pub mod check;
pub mod optim;

pub use tape::{Gradients, NodeId, Tape};
pub use tensor::{Element, Tensor};

use thiserror::Error;

/// Errors from tensor construction and tape operations.
#[derive(Debug, Error)]
pub enum GradError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("softmax over an empty axis")]
    EmptyAxis,
    #[error("index {index} out of range {bound} in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("cross-entropy has no unignored target positions")]
    AllIgnored,
}

pub type Result<T, E = GradError> = std::result::Result<T, E>;
