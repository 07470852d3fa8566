//! Dense fp64 tensors with define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every op executed through a [`Var`] handle. Calling
//! [`Tape::backward`] on a scalar root sweeps the record once in reverse and
//! returns the gradient of every trainable leaf.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{
    finite_difference_error, finite_difference_pairs, grad_check, grad_check_pairs,
    grad_check_with, relative_error, GradCheckError, Stencil,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) use tape::softplus;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: domain error, {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("shape {shape:?} does not hold {len} values")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("shape {0:?} has a zero extent")]
    InvalidShape(Vec<usize>),
    #[error("slice [{start}, {start}+{len}) out of range for shape {shape:?}")]
    SliceOutOfRange {
        shape: Vec<usize>,
        start: usize,
        len: usize,
    },
    #[error("backward root must be scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
}
