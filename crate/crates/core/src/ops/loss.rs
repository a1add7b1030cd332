//! Binary cross-entropy over per-pixel probabilities.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities are clamped to `[BCE_EPSILON, 1 - BCE_EPSILON]` before the
/// logs so exact 0/1 predictions stay finite.
pub const BCE_EPSILON: f64 = 1e-7;

/// Mean over pixels of `-[t*ln(p) + (1-t)*ln(1-p)]`.
///
/// Returns the scalar loss and its gradient w.r.t. `prob`. The gradient is
/// evaluated at the clamped probability but indexed to the unclamped input
/// (the clamp is treated as the identity), so saturated pixels still receive
/// a finite, non-zero pull back toward the target.
pub fn bce_loss<S: Scalar>(prob: &Tensor<S>, target: &Tensor<S>) -> Result<(S, Tensor<S>)> {
    prob.same_shape(target, "bce_loss")?;
    let eps = S::from_f64_c(BCE_EPSILON);
    let lo = eps;
    let hi = S::one() - eps;
    let n = S::from_f64_c(prob.len() as f64);

    let mut loss = S::zero();
    let mut grad = Vec::with_capacity(prob.len());
    for (&p_raw, &t) in prob.data().iter().zip(target.data()) {
        let p = p_raw.max(lo).min(hi);
        loss += -(t * p.ln() + (S::one() - t) * (S::one() - p).ln());
        grad.push((-(t / p) + (S::one() - t) / (S::one() - p)) / n);
    }
    Ok((loss / n, Tensor::new(prob.shape().to_vec(), grad)?))
}
