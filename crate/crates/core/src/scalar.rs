//! Scalar abstraction over the floating-point element type.
//!
//! All numeric kernels are generic over [`Scalar`] so the same code path can
//! run in `f64` (the default, and the precision used by every gradient check)
//! or `f32` (the on-disk precision of weight files).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point element type of tensors: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Copy + Send + Sync + Debug + Display + 'static
{
    /// Lossless-enough conversion from an `f64` constant.
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    /// Widen to `f64` for reporting and cross-type comparisons.
    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
