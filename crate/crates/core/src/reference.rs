//! Naive reference implementations used by the test suites.
//!
//! Everything here is written as direct loop transcriptions of the defining
//! formulas, deliberately independent of the optimized code paths it is used
//! to validate. All arithmetic is `f64`.

use crate::tensor::Tensor;

/// Quadruple-loop same-padded 3x3 stride-1 convolution.
pub fn conv2d_naive(input: &Tensor<f64>, weights: &Tensor<f64>, bias: &[f64]) -> Tensor<f64> {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let c_out = weights.shape()[0];
    assert_eq!(weights.shape(), &[c_out, c_in, 3, 3]);
    assert_eq!(bias.len(), c_out);
    let mut out = Tensor::zeros(&[c_out, h, w]);
    for o in 0..c_out {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias[o];
                for c in 0..c_in {
                    for dy in 0..3usize {
                        for dx in 0..3usize {
                            let iy = y as isize + dy as isize - 1;
                            let ix = x as isize + dx as isize - 1;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let iv = input.at3(c, iy as usize, ix as usize);
                            let wv = weights.data()[((o * c_in + c) * 3 + dy) * 3 + dx];
                            acc += iv * wv;
                        }
                    }
                }
                let off = out.offset3(o, y, x);
                out.data_mut()[off] = acc;
            }
        }
    }
    out
}

/// Per-pixel double-loop confusion tally over flat `{0,1}` masks.
/// `n[i][j]` counts pixels of true class `i` predicted as class `j`.
pub fn confusion_naive(pred: &[f64], truth: &[f64]) -> [[u64; 2]; 2] {
    assert_eq!(pred.len(), truth.len());
    let mut n = [[0u64; 2]; 2];
    for k in 0..pred.len() {
        let t = if truth[k] == 1.0 { 1 } else { 0 };
        let p = if pred[k] == 1.0 { 1 } else { 0 };
        n[t][p] += 1;
    }
    n
}

/// Metric values recomputed from a confusion matrix by direct formula
/// transcription.
#[derive(Debug, Clone, Copy)]
pub struct NaiveMetrics {
    pub pa: f64,
    pub ma: f64,
    pub miou: f64,
    pub fwiou: f64,
    pub accuracy: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Hand-formula recomputation of every metric from `n[i][j]`.
///
/// Class totals are `t_i = sum_j n[i][j]`; per-class IOU is
/// `n_ii / (t_i + sum_j n[j][i] - n_ii)`. Classes absent from both truth and
/// prediction are excluded from MA and mIOU; an absent class that was
/// nevertheless predicted scores IOU 0.
pub fn metrics_naive(n: [[u64; 2]; 2]) -> NaiveMetrics {
    let t = [n[0][0] + n[0][1], n[1][0] + n[1][1]];
    let col = [n[0][0] + n[1][0], n[0][1] + n[1][1]];
    let total = (t[0] + t[1]) as f64;

    let pa = (n[0][0] + n[1][1]) as f64 / total;

    let mut ma_sum = 0.0;
    let mut ma_classes = 0usize;
    for i in 0..2 {
        if t[i] > 0 {
            ma_sum += n[i][i] as f64 / t[i] as f64;
            ma_classes += 1;
        }
    }
    let ma = ma_sum / ma_classes as f64;

    let mut iou = [0.0f64; 2];
    let mut included = [false; 2];
    for i in 0..2 {
        if t[i] == 0 && col[i] == 0 {
            continue;
        }
        included[i] = true;
        if t[i] > 0 {
            iou[i] = n[i][i] as f64 / (t[i] + col[i] - n[i][i]) as f64;
        }
        // t_i == 0 with predictions present leaves IOU at 0
    }
    let inc = included.iter().filter(|&&b| b).count() as f64;
    let miou = (iou[0] + iou[1]) / inc;

    let fwiou = (t[0] as f64 * iou[0] + t[1] as f64 * iou[1]) / total;

    let (tp, tn, fp, fn_) = (n[1][1], n[0][0], n[0][1], n[1][0]);
    let accuracy = (tp + tn) as f64 / (tp + tn + fp + fn_) as f64;
    let fpr = if fp + tn > 0 {
        fp as f64 / (fp + tn) as f64
    } else {
        0.0
    };
    let tpr = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };

    NaiveMetrics {
        pa,
        ma,
        miou,
        fwiou,
        accuracy,
        fpr,
        tpr,
    }
}

/// Central-difference gradient of `f` w.r.t. the elements of `x`.
///
/// Uses `h = 1e-5` in `f64`, the precision every gradient check runs at.
pub fn finite_difference_gradient<F>(mut f: F, x: &Tensor<f64>) -> Vec<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    const H: f64 = 1e-5;
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let original = probe.data()[k];
        probe.data_mut()[k] = original + H;
        let plus = f(&probe);
        probe.data_mut()[k] = original - H;
        let minus = f(&probe);
        probe.data_mut()[k] = original;
        grad.push((plus - minus) / (2.0 * H));
    }
    grad
}

/// Relative-error agreement used by the gradient checks: passes when
/// `|a - b| <= tol * max(|a| + |b|, 1)` elementwise.
pub fn grads_agree(analytic: &[f64], numeric: &[f64], tol: f64) -> std::result::Result<(), String> {
    assert_eq!(analytic.len(), numeric.len());
    for (k, (&a, &b)) in analytic.iter().zip(numeric).enumerate() {
        let scale = (a.abs() + b.abs()).max(1.0);
        if (a - b).abs() > tol * scale {
            return Err(format!(
                "gradient mismatch at {k}: analytic {a}, numeric {b}, rel err {}",
                (a - b).abs() / scale
            ));
        }
    }
    Ok(())
}
