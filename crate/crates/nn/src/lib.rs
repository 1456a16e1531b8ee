//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! The layer set is deliberately small: linear maps, ReLU, softmax, layer
//! norm, mean pooling and single-head scaled dot-product attention, plus the
//! scalar ops needed to express pose losses. [`ParamStore`] owns trainable
//! tensors and Adam moments; [`grad_check`] compares backward gradients with
//! central finite differences.

mod error;
mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use error::NnError;
pub use gradcheck::{grad_check, grad_check_sampled, GradCheckReport};
pub use optim::{adam_step, AdamConfig};
pub use params::{Grads, Init, ParamId, ParamStore};
pub use tape::{Axis, Tape, Var};
pub use tensor::Tensor;
