//! Elementwise activations.

use super::LayerGrad;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| v.max(S::zero()))
}

/// Gradient passes where `x > 0`; the subgradient at 0 is 0.
pub fn relu_backward<S: Scalar>(x: &Tensor<S>, upstream: &Tensor<S>) -> Result<LayerGrad<S>> {
    x.same_shape(upstream, "relu_backward")?;
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&xv, &uv)| if xv > S::zero() { uv } else { S::zero() })
        .collect();
    Ok(LayerGrad::parameter_free(Tensor::new(
        x.shape().to_vec(),
        data,
    )?))
}

/// Logistic function `1 / (1 + exp(-x))`, evaluated in the numerically stable
/// branch so large `|x|` saturates to 0 or 1 without overflow.
pub fn sigmoid_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(sigmoid_scalar)
}

#[inline]
pub(crate) fn sigmoid_scalar<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

/// Backward pass in terms of the forward output `y`: `y * (1 - y) * upstream`.
pub fn sigmoid_backward<S: Scalar>(y: &Tensor<S>, upstream: &Tensor<S>) -> Result<LayerGrad<S>> {
    y.same_shape(upstream, "sigmoid_backward")?;
    let data = y
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&yv, &uv)| yv * (S::one() - yv) * uv)
        .collect();
    Ok(LayerGrad::parameter_free(Tensor::new(
        y.shape().to_vec(),
        data,
    )?))
}
