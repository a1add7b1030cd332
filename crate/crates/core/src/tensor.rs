//! Dense row-major tensor.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense N-dimensional array with shape metadata, stored flat in row-major
/// order. The last axis is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(
                "Tensor::new",
                format!("{shape:?} (len {expected}, all dims > 0)"),
                format!("data len {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, S::zero())
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn zeros_like(other: &Tensor<S>) -> Self {
        Tensor::zeros(other.shape())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Flat offset of `[c, y, x]` in a 3-D tensor.
    #[inline]
    pub fn offset3(&self, c: usize, y: usize, x: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 3);
        (c * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn at3(&self, c: usize, y: usize, x: usize) -> S {
        self.data[self.offset3(c, y, x)]
    }

    /// True when every element is finite (no NaN or infinity).
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise map into a new tensor of the same shape.
    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Widens (or narrows) the element type; used at the storage boundary.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| T::from_f64_c(v.to_f64_c()))
                .collect(),
        }
    }

    pub(crate) fn same_shape(&self, other: &Tensor<S>, context: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(
                context,
                format!("{:?}", self.shape),
                format!("{:?}", other.shape),
            ));
        }
        Ok(())
    }
}
