//! Scalar abstraction over the two float widths the engine runs in.
//!
//! Training stores and computes in `f32`; gradient checking instantiates the
//! same graph in `f64` because central differences are unreliable at 32 bits.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Element type of tensors. Implemented for `f32` and `f64`.
pub trait Scalar:
    num_traits::Float + Sum + Send + Sync + Debug + Display + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    /// Gauss error function, used by the exact GELU.
    fn erf(self) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}
