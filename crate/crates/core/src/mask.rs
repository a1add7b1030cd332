//! Probability and binary mask newtypes in model space `[1, H, W]`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-pixel probability map with every value strictly inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask<S>(Tensor<S>);

impl<S: Scalar> ProbMask<S> {
    /// Validates shape `[1, H, W]` and the open-interval invariant.
    pub fn new(values: Tensor<S>) -> Result<Self> {
        check_mask_shape(values.shape(), "ProbMask::new")?;
        if values
            .data()
            .iter()
            .any(|&v| !(v > S::zero() && v < S::one()))
        {
            return Err(Error::Contract {
                context: "ProbMask::new",
                detail: "values must lie strictly in (0, 1)".into(),
            });
        }
        Ok(ProbMask(values))
    }

    /// Wraps raw sigmoid output, nudging values that rounded to exactly 0 or 1
    /// back into the open interval.
    pub fn from_activation(values: Tensor<S>) -> Result<Self> {
        check_mask_shape(values.shape(), "ProbMask::from_activation")?;
        let lo = S::min_positive_value();
        let hi = S::one() - S::epsilon();
        Ok(ProbMask(values.map(|v| v.max(lo).min(hi))))
    }

    pub fn values(&self) -> &Tensor<S> {
        &self.0
    }

    pub fn into_values(self) -> Tensor<S> {
        self.0
    }

    /// Spatial size `(H, W)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.0.shape()[1], self.0.shape()[2])
    }
}

/// Hard `{0, 1}` mask of the same layout as [`ProbMask`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask<S>(Tensor<S>);

impl<S: Scalar> BinaryMask<S> {
    /// Validates shape `[1, H, W]` and that every value is exactly 0 or 1.
    pub fn new(values: Tensor<S>) -> Result<Self> {
        check_mask_shape(values.shape(), "BinaryMask::new")?;
        if values
            .data()
            .iter()
            .any(|&v| v != S::zero() && v != S::one())
        {
            return Err(Error::Contract {
                context: "BinaryMask::new",
                detail: "values must be exactly 0 or 1".into(),
            });
        }
        Ok(BinaryMask(values))
    }

    pub fn values(&self) -> &Tensor<S> {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.0.shape()[1], self.0.shape()[2])
    }

    /// Number of pixels equal to 1.
    pub fn positive_count(&self) -> usize {
        self.0.data().iter().filter(|&&v| v == S::one()).count()
    }

    pub fn pixel_count(&self) -> usize {
        self.0.len()
    }
}

fn check_mask_shape(shape: &[usize], context: &'static str) -> Result<()> {
    if shape.len() != 3 || shape[0] != 1 {
        return Err(Error::shape(context, "[1, H, W]", format!("{shape:?}")));
    }
    Ok(())
}
