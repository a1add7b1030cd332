//! Differentiable layer primitives with explicit forward and backward passes.
//!
//! Every operation is a pure function of its inputs. Backward passes return a
//! [`LayerGrad`] holding the gradient w.r.t. the layer input plus one gradient
//! per parameter tensor (empty for parameter-free layers). Parallel sections
//! only split work across disjoint output slices with a fixed summation order,
//! so results are bitwise identical regardless of thread count.

mod activation;
mod conv;
mod loss;
mod pool;
mod upsample;

pub use activation::{relu_backward, relu_forward, sigmoid_backward, sigmoid_forward};
pub use conv::{conv2d_backward, conv2d_forward};
pub use loss::{bce_loss, BCE_EPSILON};
pub use pool::{maxpool2_backward, maxpool2_forward, PoolIndices};
pub use upsample::{upsample2_backward, upsample2_forward};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Gradients produced by one layer's backward pass.
#[derive(Debug, Clone)]
pub struct LayerGrad<S> {
    /// Gradient w.r.t. the layer's forward input; same shape as that input.
    pub input_grad: Tensor<S>,
    /// One gradient per parameter tensor, in the layer's parameter order.
    pub param_grads: Vec<Tensor<S>>,
}

impl<S: Scalar> LayerGrad<S> {
    pub fn parameter_free(input_grad: Tensor<S>) -> Self {
        LayerGrad {
            input_grad,
            param_grads: Vec::new(),
        }
    }
}

/// `out[i] += w * inp[i]` over contiguous rows; the convolution inner loop.
#[inline]
pub(crate) fn axpy<S: Scalar>(out: &mut [S], w: S, inp: &[S]) {
    debug_assert_eq!(out.len(), inp.len());
    for (o, &i) in out.iter_mut().zip(inp) {
        *o += w * i;
    }
}

#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}
