//! Deterministic mini-batch training.
//!
//! Sample order is reshuffled every epoch from a seeded stream; batch
//! gradients are the mean of per-sample gradients accumulated in a fixed
//! order, so identical (seed, data, config) reproduce bitwise-identical
//! parameters. Per-sample passes inside a batch may run on multiple threads.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetManifest, SamplePair, MODEL_INPUT};
use crate::error::{Error, Result};
use crate::model::{backward, forward, forward_trace, save_weights, ModelParams};
use crate::ops::bce_loss;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam(AdamParams),
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam(AdamParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Write a checkpoint every N epochs; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 4,
            seed: 0,
            checkpoint_every: 0,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch losses and run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<Option<f64>>,
    pub wall_seconds: f64,
    pub final_checkpoint: Option<PathBuf>,
}

impl TrainReport {
    /// Loss CSV: `epoch,train_loss,val_loss`; the val column is empty when no
    /// validation split was supplied.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, loss) in self.train_loss.iter().enumerate() {
            let val = self.val_loss[i].map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", i + 1, loss, val));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::metrics::write_text(path, &self.to_csv())
    }
}

/// Trains `params` on `train_set` at the default model-space size.
pub fn train<S: Scalar>(
    params: ModelParams<S>,
    train_set: &DatasetManifest,
    val_set: Option<&DatasetManifest>,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(ModelParams<S>, TrainReport)> {
    train_sized(params, train_set, val_set, config, checkpoint_dir, MODEL_INPUT)
}

pub fn train_sized<S: Scalar>(
    mut params: ModelParams<S>,
    train_set: &DatasetManifest,
    val_set: Option<&DatasetManifest>,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    input_size: (usize, usize),
) -> Result<(ModelParams<S>, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let start = Instant::now();

    let samples = load_all::<S>(train_set, input_size)?;
    let val_samples = val_set.map(|m| load_all::<S>(m, input_size)).transpose()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = OptimizerState::new(&params, config.optimizer);
    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut val_loss = Vec::with_capacity(config.epochs);
    let mut final_checkpoint = None;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_loss_sum = 0.0f64;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let per_sample: Vec<(f64, Vec<(Tensor<S>, Tensor<S>)>)> = chunk
                .par_iter()
                .map(|&i| sample_grad(&params, &samples[i]))
                .collect::<Result<_>>()?;

            for (loss, grads) in &per_sample {
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                        what: format!("loss {loss}"),
                    });
                }
                if let Some(k) = grads
                    .iter()
                    .position(|(gw, gb)| !gw.all_finite() || !gb.all_finite())
                {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                        what: format!("gradient for layer index {k}"),
                    });
                }
                epoch_loss_sum += loss;
            }

            let grads = mean_grads(per_sample.into_iter().map(|(_, g)| g), chunk.len());
            optimizer.step(&mut params, &grads, config.learning_rate);
        }
        train_loss.push(epoch_loss_sum / samples.len() as f64);

        val_loss.push(match &val_samples {
            Some(v) => Some(mean_loss(&params, v)?),
            None => None,
        });

        if let Some(dir) = checkpoint_dir {
            let last = epoch == config.epochs;
            let scheduled = config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0;
            if last || scheduled {
                let path = dir.join(format!("ckpt_epoch{epoch}.adlw"));
                save_weights(&params, &path)?;
                if last {
                    final_checkpoint = Some(path);
                }
            }
        }
    }

    let report = TrainReport {
        train_loss,
        val_loss,
        wall_seconds: start.elapsed().as_secs_f64(),
        final_checkpoint,
    };
    Ok((params, report))
}

/// Mean BCE loss over a dataset; parameters are untouched.
pub fn evaluate_loss<S: Scalar>(params: &ModelParams<S>, dataset: &DatasetManifest) -> Result<f64> {
    evaluate_loss_sized(params, dataset, MODEL_INPUT)
}

pub fn evaluate_loss_sized<S: Scalar>(
    params: &ModelParams<S>,
    dataset: &DatasetManifest,
    input_size: (usize, usize),
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let samples = load_all::<S>(dataset, input_size)?;
    mean_loss(params, &samples)
}

fn load_all<S: Scalar>(
    manifest: &DatasetManifest,
    input_size: (usize, usize),
) -> Result<Vec<SamplePair<S>>> {
    (0..manifest.len())
        .into_par_iter()
        .map(|i| manifest.load_sample_to::<S>(i, input_size))
        .collect()
}

fn sample_grad<S: Scalar>(
    params: &ModelParams<S>,
    sample: &SamplePair<S>,
) -> Result<(f64, Vec<(Tensor<S>, Tensor<S>)>)> {
    let (prob, trace) = forward_trace(params, &sample.image)?;
    let (loss, loss_grad) = bce_loss(prob.values(), sample.mask.values())?;
    let grads = backward(params, &trace, &loss_grad)?;
    Ok((loss.to_f64_c(), grads))
}

fn mean_loss<S: Scalar>(params: &ModelParams<S>, samples: &[SamplePair<S>]) -> Result<f64> {
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| -> Result<f64> {
            let prob = forward(params, &s.image)?;
            let (loss, _) = bce_loss(prob.values(), s.mask.values())?;
            Ok(loss.to_f64_c())
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Sums per-sample gradients in sample order, then scales by `1/n`.
fn mean_grads<S: Scalar>(
    per_sample: impl Iterator<Item = Vec<(Tensor<S>, Tensor<S>)>>,
    n: usize,
) -> Vec<(Tensor<S>, Tensor<S>)> {
    let mut acc: Option<Vec<(Tensor<S>, Tensor<S>)>> = None;
    for grads in per_sample {
        match &mut acc {
            None => acc = Some(grads),
            Some(acc) => {
                for ((aw, ab), (gw, gb)) in acc.iter_mut().zip(grads) {
                    add_assign(aw, &gw);
                    add_assign(ab, &gb);
                }
            }
        }
    }
    let mut acc = acc.expect("non-empty batch");
    let inv = S::one() / S::from_f64_c(n as f64);
    for (w, b) in &mut acc {
        scale(w, inv);
        scale(b, inv);
    }
    acc
}

fn add_assign<S: Scalar>(a: &mut Tensor<S>, b: &Tensor<S>) {
    for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
}

fn scale<S: Scalar>(a: &mut Tensor<S>, k: S) {
    for x in a.data_mut() {
        *x *= k;
    }
}

struct OptimizerState<S> {
    kind: OptimizerKind,
    step_count: u32,
    /// First/second moment per layer, for weights and bias. Unused for SGD.
    moments: Vec<[(Tensor<S>, Tensor<S>); 2]>,
}

impl<S: Scalar> OptimizerState<S> {
    fn new(params: &ModelParams<S>, kind: OptimizerKind) -> Self {
        let moments = params
            .layers()
            .iter()
            .map(|l| {
                [
                    (Tensor::zeros_like(&l.weights), Tensor::zeros_like(&l.bias)),
                    (Tensor::zeros_like(&l.weights), Tensor::zeros_like(&l.bias)),
                ]
            })
            .collect();
        OptimizerState {
            kind,
            step_count: 0,
            moments,
        }
    }

    fn step(&mut self, params: &mut ModelParams<S>, grads: &[(Tensor<S>, Tensor<S>)], lr: f64) {
        let lr = S::from_f64_c(lr);
        match self.kind {
            OptimizerKind::Sgd => {
                for (layer, (gw, gb)) in params.layers_mut().iter_mut().zip(grads) {
                    sgd_update(&mut layer.weights, gw, lr);
                    sgd_update(&mut layer.bias, gb, lr);
                }
            }
            OptimizerKind::Adam(adam) => {
                self.step_count += 1;
                let b1 = S::from_f64_c(adam.beta1);
                let b2 = S::from_f64_c(adam.beta2);
                let eps = S::from_f64_c(adam.epsilon);
                let bc1 = S::one() - b1.powi(self.step_count as i32);
                let bc2 = S::one() - b2.powi(self.step_count as i32);
                for (k, (layer, (gw, gb))) in
                    params.layers_mut().iter_mut().zip(grads).enumerate()
                {
                    let [(mw, mb), (vw, vb)] = &mut self.moments[k];
                    adam_update(&mut layer.weights, gw, mw, vw, lr, b1, b2, eps, bc1, bc2);
                    adam_update(&mut layer.bias, gb, mb, vb, lr, b1, b2, eps, bc1, bc2);
                }
            }
        }
    }
}

fn sgd_update<S: Scalar>(p: &mut Tensor<S>, g: &Tensor<S>, lr: S) {
    for (pv, &gv) in p.data_mut().iter_mut().zip(g.data()) {
        *pv = *pv - lr * gv;
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update<S: Scalar>(
    p: &mut Tensor<S>,
    g: &Tensor<S>,
    m: &mut Tensor<S>,
    v: &mut Tensor<S>,
    lr: S,
    b1: S,
    b2: S,
    eps: S,
    bias_corr1: S,
    bias_corr2: S,
) {
    let one = S::one();
    for (((pv, &gv), mv), vv) in p
        .data_mut()
        .iter_mut()
        .zip(g.data())
        .zip(m.data_mut().iter_mut())
        .zip(v.data_mut().iter_mut())
    {
        *mv = b1 * *mv + (one - b1) * gv;
        *vv = b2 * *vv + (one - b2) * gv * gv;
        let m_hat = *mv / bias_corr1;
        let v_hat = *vv / bias_corr2;
        *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::model::{build_model, ModelConfig};

    fn small_model_config() -> ModelConfig {
        ModelConfig {
            input_size: (16, 16),
            input_channels: 3,
            encoder_channels: vec![4, 8],
            decoder_channels: vec![4, 1],
            seed: 5,
        }
    }

    fn tiny_synth(dir: &Path, count: usize, seed: u64) -> DatasetManifest {
        generate_synthetic(
            &SynthConfig {
                count,
                image_size: (16, 16),
                rect_area_fraction: (0.05, 0.3),
                seed,
                ..SynthConfig::default()
            },
            dir,
        )
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_is_rejected_but_tiny_rate_keeps_loss_flat() {
        let config = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn empty_dataset_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_synth(dir.path(), 1, 0);
        let empty = DatasetManifest::from_entries("empty", dir.path(), vec![]).unwrap();
        let params = build_model::<f64>(&small_model_config()).unwrap();
        let err = train_sized(
            params,
            &empty,
            None,
            &TrainConfig::default(),
            None,
            (16, 16),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        drop(manifest);
    }

    #[test]
    fn same_seed_reproduces_identical_losses_and_params() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_synth(dir.path(), 6, 3);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 2,
            seed: 17,
            ..TrainConfig::default()
        };
        let run = || {
            let params = build_model::<f64>(&small_model_config()).unwrap();
            train_sized(params, &manifest, None, &config, None, (16, 16)).unwrap()
        };
        let (pa, ra) = run();
        let (pb, rb) = run();
        assert_eq!(ra.train_loss, rb.train_loss);
        assert_eq!(pa, pb);
    }

    #[test]
    fn sgd_step_is_exactly_minus_lr_times_grad() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_synth(dir.path(), 1, 8);
        let model_config = small_model_config();
        let params = build_model::<f64>(&model_config).unwrap();

        let sample: SamplePair<f64> = manifest.load_sample_to(0, (16, 16)).unwrap();
        let (_, grads) = sample_grad(&params, &sample).unwrap();

        let lr = 0.05;
        let config = TrainConfig {
            learning_rate: lr,
            epochs: 1,
            batch_size: 1,
            optimizer: OptimizerKind::Sgd,
            ..TrainConfig::default()
        };
        let (updated, _) =
            train_sized(params.clone(), &manifest, None, &config, None, (16, 16)).unwrap();

        for ((before, after), (gw, gb)) in params
            .layers()
            .iter()
            .zip(updated.layers())
            .zip(&grads)
        {
            for ((&p0, &p1), &g) in before
                .weights
                .data()
                .iter()
                .zip(after.weights.data())
                .zip(gw.data())
            {
                assert_eq!(p1, p0 - lr * g);
            }
            for ((&p0, &p1), &g) in before.bias.data().iter().zip(after.bias.data()).zip(gb.data())
            {
                assert_eq!(p1, p0 - lr * g);
            }
        }
    }

    #[test]
    fn non_finite_params_abort_with_epoch_and_batch() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_synth(dir.path(), 2, 4);
        let mut params = build_model::<f64>(&small_model_config()).unwrap();
        let last = params.layers().len() - 1;
        params.layers_mut()[last].bias.data_mut()[0] = f64::NAN;
        let err = train_sized(
            params,
            &manifest,
            None,
            &TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
            None,
            (16, 16),
        )
        .unwrap_err();
        match err {
            Error::NonFiniteLoss { epoch, batch, .. } => {
                assert_eq!(epoch, 1);
                assert_eq!(batch, 0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn checkpoints_are_written_on_schedule() {
        let data_dir = tempfile::tempdir().unwrap();
        let out_dir = tempfile::tempdir().unwrap();
        let manifest = tiny_synth(data_dir.path(), 2, 5);
        let params = build_model::<f64>(&small_model_config()).unwrap();
        let config = TrainConfig {
            epochs: 4,
            checkpoint_every: 2,
            ..TrainConfig::default()
        };
        let (_, report) = train_sized(
            params,
            &manifest,
            Some(&manifest),
            &config,
            Some(out_dir.path()),
            (16, 16),
        )
        .unwrap();
        assert!(out_dir.path().join("ckpt_epoch2.adlw").exists());
        assert!(out_dir.path().join("ckpt_epoch4.adlw").exists());
        assert!(!out_dir.path().join("ckpt_epoch3.adlw").exists());
        assert_eq!(
            report.final_checkpoint.as_deref(),
            Some(out_dir.path().join("ckpt_epoch4.adlw").as_path())
        );
        assert!(report.val_loss.iter().all(|v| v.is_some()));
        let csv = report.to_csv();
        assert!(csv.starts_with("epoch,train_loss,val_loss\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn evaluate_loss_is_order_invariant_and_matches_hand_mean() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_synth(dir.path(), 3, 11);
        let params = build_model::<f64>(&small_model_config()).unwrap();

        let mut hand_sum = 0.0;
        for i in 0..3 {
            let s: SamplePair<f64> = manifest.load_sample_to(i, (16, 16)).unwrap();
            let prob = forward(&params, &s.image).unwrap();
            hand_sum += bce_loss(prob.values(), s.mask.values()).unwrap().0;
        }
        let expected = hand_sum / 3.0;
        let got = evaluate_loss_sized(&params, &manifest, (16, 16)).unwrap();
        assert!((got - expected).abs() < 1e-12);

        let mut entries = manifest.entries().to_vec();
        entries.reverse();
        let reversed =
            DatasetManifest::from_entries("rev", manifest.base_dir(), entries).unwrap();
        let got_rev = evaluate_loss_sized(&params, &reversed, (16, 16)).unwrap();
        assert!((got - got_rev).abs() < 1e-12);
    }
}
