//! Minimal reverse-mode differentiation core.
//!
//! Dense [`Tensor`]s flow through a tape-based [`Graph`] holding the
//! primitives the model heads need (affine, 3x3 convolution, pooling,
//! bilinear resize, activations, softmax family, structural ops, and the
//! sequence losses). Reductions and the CTC dynamic program accumulate in
//! `f64` regardless of the element type; `f64` tensors are used by every
//! finite-difference oracle, `f32` by training.

mod ctc;
pub mod checkpoint;
mod gradcheck;
mod graph;
mod kernels;
mod params;
mod scalar;
mod tensor;

pub use gradcheck::{grad_check, grad_check_coords};
pub use graph::{Graph, NodeId, Regions};
pub use params::{AdamHyper, Lease, ParamId, ParamStore};
pub use scalar::{el, Element};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error(
        "label of length {label} with {repeats} adjacent repeats cannot align to {frames} frames"
    )]
    CtcInfeasible {
        label: usize,
        repeats: usize,
        frames: usize,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Index of the largest element; ties go to the first.
pub fn argmax<R: Element>(row: &[R]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
