//! Dense-array differentiable computation core.
//!
//! A [`Graph`] records primitive applications during the forward pass;
//! [`Graph::backward`] propagates exact gradients in reverse. [`AdamState`]
//! applies the optimizer update and [`gradcheck`] verifies analytic
//! gradients against central finite differences.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{gradcheck, GradCheckConfig};
pub use graph::{sigmoid, softmax_row as softmax_row_masked, Graph, NodeId};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid shape {shape:?}: {reason}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("embedding index {index} out of range for table with {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
