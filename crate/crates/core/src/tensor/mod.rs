//! Minimal reverse-mode autodiff over dense tensors.

mod adam;
mod conv;
mod dense;
pub mod gradcheck;
mod graph;
mod scalar;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use dense::Tensor;
pub use graph::{Activation, Gradients, Graph, Var};
pub use scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not hold {len} elements")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("conv2d: kernel sizes must be odd, got weight shape {0:?}")]
    EvenKernel(Vec<usize>),
    #[error("backward needs a single-element loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    /// Failure of a function built on top of the graph (a layer or loss).
    #[error("{0}")]
    Composite(String),
}
