//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Tape`] records every operation performed through it; [`Tape::backward`]
//! replays the records once in reverse, accumulating gradients into every
//! tensor that requires them. Gradients accumulate across backward calls
//! until the caller resets them with [`Tensor::zero_grad`], matching the
//! usual autodiff contract. All stochasticity (reparameterization noise)
//! is supplied by the caller, so the module itself is fully deterministic.
//!
//! A tape and the tensors recorded on it belong to one thread of execution;
//! nothing in here is shared or global.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, GradCheckCase};
pub use tape::{BackwardReport, Tape};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors surfaced by tape operations and the optimizer.
#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("log domain error: input[{index}] = {value} is not strictly positive")]
    LogDomain { index: usize, value: f64 },
    #[error("empty tensor passed to {op}")]
    EmptyTensor { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("loss tensor is not recorded on this tape")]
    LossNotOnTape,
    #[error("value length {len} does not match shape {shape:?}")]
    ValueLength { len: usize, shape: Vec<usize> },
    #[error("adam state was initialized for {expected} parameter tensors, got {actual}")]
    AdamArityMismatch { expected: usize, actual: usize },
}
