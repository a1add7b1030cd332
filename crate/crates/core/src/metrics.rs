//! Segmentation metrics over 2x2 confusion counts, threshold sweeps, and
//! ROC points.
//!
//! Class 0 is background, class 1 is billboard. `n[i][j]` counts pixels of
//! true class `i` predicted as class `j`; class totals are `t_i = sum_j
//! n[i][j]`. Per-class IOU is `n_ii / (t_i + sum_j n[j][i] - n_ii)`.
//! Dataset-level values follow the per-image protocol: metrics are computed
//! per image, then arithmetically averaged.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::data::DatasetManifest;
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, ProbMask};
use crate::model::{forward, ModelParams};
use crate::scalar::Scalar;

/// 2x2 confusion counts; the carrier for every metric below.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    n: [[u64; 2]; 2],
}

/// Joint tally of `(truth, prediction)` classes over aligned binary masks.
pub fn confusion<S: Scalar>(pred: &BinaryMask<S>, truth: &BinaryMask<S>) -> Result<ConfusionCounts> {
    pred.values().same_shape(truth.values(), "confusion")?;
    let mut n = [[0u64; 2]; 2];
    for (&p, &t) in pred.values().data().iter().zip(truth.values().data()) {
        let ti = usize::from(t == S::one());
        let pi = usize::from(p == S::one());
        n[ti][pi] += 1;
    }
    Ok(ConfusionCounts { n })
}

impl ConfusionCounts {
    pub fn from_matrix(n: [[u64; 2]; 2]) -> Self {
        ConfusionCounts { n }
    }

    pub fn matrix(&self) -> [[u64; 2]; 2] {
        self.n
    }

    pub fn true_positives(&self) -> u64 {
        self.n[1][1]
    }

    pub fn true_negatives(&self) -> u64 {
        self.n[0][0]
    }

    pub fn false_positives(&self) -> u64 {
        self.n[0][1]
    }

    pub fn false_negatives(&self) -> u64 {
        self.n[1][0]
    }

    /// Pixels of true class `i`.
    pub fn class_total(&self, i: usize) -> u64 {
        self.n[i][0] + self.n[i][1]
    }

    /// Pixels predicted as class `i` (column sum).
    pub fn predicted_total(&self, i: usize) -> u64 {
        self.n[0][i] + self.n[1][i]
    }

    pub fn total(&self) -> u64 {
        self.class_total(0) + self.class_total(1)
    }

    /// True when either class is absent from the truth, which forces a
    /// zero denominator in FPR or TPR.
    pub fn is_degenerate(&self) -> bool {
        self.class_total(0) == 0 || self.class_total(1) == 0
    }

    /// Global fraction of correctly classified pixels.
    pub fn pixel_accuracy(&self) -> f64 {
        (self.n[0][0] + self.n[1][1]) as f64 / self.total() as f64
    }

    /// Mean of per-class accuracies `n_ii / t_i` over classes present in the
    /// truth; absent classes are excluded from the mean.
    pub fn mean_accuracy(&self) -> f64 {
        let mut sum = 0.0;
        let mut classes = 0usize;
        for i in 0..2 {
            let t = self.class_total(i);
            if t > 0 {
                sum += self.n[i][i] as f64 / t as f64;
                classes += 1;
            }
        }
        sum / classes as f64
    }

    /// Per-class IOU for a class present in truth or prediction.
    /// Returns `None` for a class absent from both (excluded from the mean);
    /// a class absent from truth but predicted anyway scores 0.
    fn class_iou(&self, i: usize) -> Option<f64> {
        let t = self.class_total(i);
        let col = self.predicted_total(i);
        if t == 0 && col == 0 {
            return None;
        }
        if t == 0 {
            return Some(0.0);
        }
        Some(self.n[i][i] as f64 / (t + col - self.n[i][i]) as f64)
    }

    /// Mean of per-class IOU over included classes.
    pub fn mean_iou(&self) -> f64 {
        let ious: Vec<f64> = (0..2).filter_map(|i| self.class_iou(i)).collect();
        ious.iter().sum::<f64>() / ious.len() as f64
    }

    /// Class-frequency-weighted IOU: `sum_i t_i * IOU_i / sum_k t_k`.
    pub fn fw_iou(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..2 {
            let t = self.class_total(i);
            if t > 0 {
                acc += t as f64 * self.class_iou(i).unwrap_or(0.0);
            }
        }
        acc / self.total() as f64
    }

    /// `(TP + TN) / (TP + TN + FP + FN)`; coincides with
    /// [`pixel_accuracy`](Self::pixel_accuracy) in the two-class setting.
    pub fn accuracy(&self) -> f64 {
        let correct = self.true_positives() + self.true_negatives();
        correct as f64 / self.total() as f64
    }

    /// `(FPR, TPR)` = `(FP/(FP+TN), TP/(TP+FN))`; a zero denominator yields 0
    /// (the image is flagged via [`is_degenerate`](Self::is_degenerate)).
    pub fn fpr_tpr(&self) -> (f64, f64) {
        let negatives = self.false_positives() + self.true_negatives();
        let positives = self.true_positives() + self.false_negatives();
        let fpr = if negatives > 0 {
            self.false_positives() as f64 / negatives as f64
        } else {
            0.0
        };
        let tpr = if positives > 0 {
            self.true_positives() as f64 / positives as f64
        } else {
            0.0
        };
        (fpr, tpr)
    }
}

/// Hard-thresholds a probability mask: pixel -> 1 iff `p >= threshold`.
pub fn binarize<S: Scalar>(prob: &ProbMask<S>, threshold: f64) -> BinaryMask<S> {
    let t = S::from_f64_c(threshold);
    let values = prob
        .values()
        .map(|p| if p >= t { S::one() } else { S::zero() });
    BinaryMask::new(values).expect("thresholded mask is binary by construction")
}

/// One point of the threshold sweep; all rates are per-image means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub accuracy: f64,
}

/// The 21 sweep thresholds `0.00, 0.05, ..., 1.00`.
pub fn threshold_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Sweeps the threshold grid over aligned probability/truth mask lists.
/// For every threshold, accuracy/FPR/TPR are computed per image and then
/// averaged, matching the per-image evaluation protocol.
pub fn threshold_sweep<S: Scalar>(
    probs: &[ProbMask<S>],
    truths: &[BinaryMask<S>],
) -> Result<Vec<RocPoint>> {
    if probs.is_empty() || probs.len() != truths.len() {
        return Err(Error::Contract {
            context: "threshold_sweep",
            detail: format!(
                "need equal non-empty lists, got {} probs and {} truths",
                probs.len(),
                truths.len()
            ),
        });
    }
    threshold_grid()
        .into_iter()
        .map(|threshold| {
            let per_image: Vec<(f64, f64, f64)> = probs
                .par_iter()
                .zip(truths.par_iter())
                .map(|(p, t)| -> Result<(f64, f64, f64)> {
                    let c = confusion(&binarize(p, threshold), t)?;
                    let (fpr, tpr) = c.fpr_tpr();
                    Ok((c.accuracy(), fpr, tpr))
                })
                .collect::<Result<_>>()?;
            let n = per_image.len() as f64;
            let (mut acc, mut fpr, mut tpr) = (0.0, 0.0, 0.0);
            for &(a, f, t) in &per_image {
                acc += a;
                fpr += f;
                tpr += t;
            }
            Ok(RocPoint {
                threshold,
                fpr: fpr / n,
                tpr: tpr / n,
                accuracy: acc / n,
            })
        })
        .collect()
}

/// Threshold with the largest mean accuracy. Ties prefer the value closest
/// to 0.5, then the smaller threshold.
pub fn best_threshold(points: &[RocPoint]) -> f64 {
    assert!(!points.is_empty(), "best_threshold needs at least one point");
    let mut best = points[0];
    for &p in &points[1..] {
        let better = p.accuracy > best.accuracy
            || (p.accuracy == best.accuracy
                && ((p.threshold - 0.5).abs() < (best.threshold - 0.5).abs()
                    || ((p.threshold - 0.5).abs() == (best.threshold - 0.5).abs()
                        && p.threshold < best.threshold)));
        if better {
            best = p;
        }
    }
    best.threshold
}

/// Per-image metric quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub image_id: String,
    pub pa: f64,
    pub ma: f64,
    pub miou: f64,
    pub fwiou: f64,
}

/// Dataset evaluation: per-image metrics plus their arithmetic means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_image: Vec<ImageMetrics>,
    pub mean_pa: f64,
    pub mean_ma: f64,
    pub mean_miou: f64,
    pub mean_fwiou: f64,
}

impl MetricsReport {
    fn from_per_image(per_image: Vec<ImageMetrics>) -> Self {
        let n = per_image.len() as f64;
        let mut sums = [0.0f64; 4];
        for m in &per_image {
            sums[0] += m.pa;
            sums[1] += m.ma;
            sums[2] += m.miou;
            sums[3] += m.fwiou;
        }
        MetricsReport {
            per_image,
            mean_pa: sums[0] / n,
            mean_ma: sums[1] / n,
            mean_miou: sums[2] / n,
            mean_fwiou: sums[3] / n,
        }
    }

    /// CSV rows `image_id,pa,ma,miou,fwiou` plus a final `MEAN` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,pa,ma,miou,fwiou\n");
        for m in &self.per_image {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                m.image_id, m.pa, m.ma, m.miou, m.fwiou
            ));
        }
        out.push_str(&format!(
            "MEAN,{},{},{},{}\n",
            self.mean_pa, self.mean_ma, self.mean_miou, self.mean_fwiou
        ));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

/// Runs the model over every manifest entry at the default model-space size,
/// binarizes at `threshold`, and reports per-image metrics and their means.
pub fn evaluate_dataset<S: Scalar>(
    params: &ModelParams<S>,
    manifest: &DatasetManifest,
    threshold: f64,
) -> Result<MetricsReport> {
    evaluate_dataset_sized(params, manifest, threshold, crate::data::MODEL_INPUT)
}

pub fn evaluate_dataset_sized<S: Scalar>(
    params: &ModelParams<S>,
    manifest: &DatasetManifest,
    threshold: f64,
    input_size: (usize, usize),
) -> Result<MetricsReport> {
    if manifest.is_empty() {
        return Err(Error::Contract {
            context: "evaluate_dataset",
            detail: "manifest has no entries".into(),
        });
    }
    let per_image: Vec<ImageMetrics> = (0..manifest.len())
        .into_par_iter()
        .map(|i| -> Result<ImageMetrics> {
            let pair = manifest.load_sample_to::<S>(i, input_size)?;
            let prob = forward(params, &pair.image)?;
            let c = confusion(&binarize(&prob, threshold), &pair.mask)?;
            Ok(ImageMetrics {
                image_id: pair.source_id,
                pa: c.pixel_accuracy(),
                ma: c.mean_accuracy(),
                miou: c.mean_iou(),
                fwiou: c.fw_iou(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(MetricsReport::from_per_image(per_image))
}

/// Runs the model over a manifest and sweeps the threshold grid on the
/// resulting probability masks.
pub fn sweep_dataset_sized<S: Scalar>(
    params: &ModelParams<S>,
    manifest: &DatasetManifest,
    input_size: (usize, usize),
) -> Result<Vec<RocPoint>> {
    if manifest.is_empty() {
        return Err(Error::Contract {
            context: "sweep_dataset",
            detail: "manifest has no entries".into(),
        });
    }
    let pairs: Vec<(ProbMask<S>, BinaryMask<S>)> = (0..manifest.len())
        .into_par_iter()
        .map(|i| -> Result<(ProbMask<S>, BinaryMask<S>)> {
            let pair = manifest.load_sample_to::<S>(i, input_size)?;
            let prob = forward(params, &pair.image)?;
            Ok((prob, pair.mask))
        })
        .collect::<Result<_>>()?;
    let (probs, truths): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    threshold_sweep(&probs, &truths)
}

/// Sweep CSV: `threshold,mean_accuracy,mean_fpr,mean_tpr`, one row per
/// threshold in grid order.
pub fn sweep_to_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,mean_accuracy,mean_fpr,mean_tpr\n");
    for p in points {
        out.push_str(&format!(
            "{:.2},{},{},{}\n",
            p.threshold, p.accuracy, p.fpr, p.tpr
        ));
    }
    out
}

/// ROC CSV: `fpr,tpr` ordered by threshold.
pub fn roc_to_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.fpr, p.tpr));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}
