//! Minimal dense-tensor engine with reverse-mode automatic differentiation.

pub mod gradcheck;
pub mod kernels;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
