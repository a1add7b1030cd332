//! Encoder-decoder segmentation model.
//!
//! The encoder alternates 3x3 convolutions (ReLU) with 2x2 max pooling; the
//! decoder alternates nearest-neighbor upsampling with 3x3 convolutions,
//! ending in a single-channel sigmoid layer that yields the probability mask.
//! With the default plan an input of `3x200x200` traces spatial sizes
//! 200 -> 100 -> 50 -> 25 -> 50 -> 100 -> 200.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::ProbMask;
use crate::ops::{
    conv2d_backward, conv2d_forward, maxpool2_backward, maxpool2_forward, relu_backward,
    relu_forward, sigmoid_backward, sigmoid_forward, upsample2_backward, upsample2_forward,
    PoolIndices,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use crate::weights::{load_weights, save_weights};

const KERNEL_AREA: usize = 9;

/// Architecture hyperparameters. Channel widths are per stage; spatial size
/// halves after every encoder stage and doubles after every decoder stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Model-space input size `(height, width)`.
    pub input_size: (usize, usize),
    /// Input channels (RGB = 3).
    pub input_channels: usize,
    /// Output channels of each encoder convolution.
    pub encoder_channels: Vec<usize>,
    /// Output channels of each decoder convolution; the last must be 1.
    pub decoder_channels: Vec<usize>,
    /// Seed for the weight initializer.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: (200, 200),
            input_channels: 3,
            encoder_channels: vec![16, 32, 64],
            decoder_channels: vec![32, 16, 1],
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn stages(&self) -> usize {
        self.encoder_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.is_empty() {
            return Err(Error::Config("encoder_channels must be non-empty".into()));
        }
        if self.decoder_channels.len() != self.encoder_channels.len() {
            return Err(Error::Config(format!(
                "decoder stage count {} != encoder stage count {}",
                self.decoder_channels.len(),
                self.encoder_channels.len()
            )));
        }
        if self.decoder_channels.last() != Some(&1) {
            return Err(Error::Config(
                "last decoder stage must emit 1 channel".into(),
            ));
        }
        if self.input_channels == 0
            || self
                .encoder_channels
                .iter()
                .chain(&self.decoder_channels)
                .any(|&c| c == 0)
        {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        let div = 1usize << self.stages();
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(Error::Config(format!(
                "input size {h}x{w} is not divisible by 2^{} = {div}",
                self.stages()
            )));
        }
        Ok(())
    }

    /// `(out_channels, in_channels)` of every convolution, in execution order.
    pub fn conv_channels(&self) -> Vec<(usize, usize)> {
        let mut chans = Vec::with_capacity(2 * self.stages());
        let mut prev = self.input_channels;
        for &c in &self.encoder_channels {
            chans.push((c, prev));
            prev = c;
        }
        for &c in &self.decoder_channels {
            chans.push((c, prev));
            prev = c;
        }
        chans
    }

    /// Total learnable parameter count (weights + biases).
    pub fn parameter_count(&self) -> usize {
        self.conv_channels()
            .iter()
            .map(|&(out_c, in_c)| out_c * in_c * KERNEL_AREA + out_c)
            .sum()
    }

    fn layer_ids(&self) -> Vec<String> {
        let stages = self.stages();
        (0..stages)
            .map(|i| format!("enc{}_conv", i + 1))
            .chain((0..stages).map(|i| format!("dec{}_conv", i + 1)))
            .collect()
    }
}

/// One convolution's learnable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<S> {
    pub id: String,
    /// Shape `[C_out, C_in, 3, 3]`.
    pub weights: Tensor<S>,
    /// Shape `[C_out]`.
    pub bias: Tensor<S>,
}

/// Learnable parameters, ordered as executed. Immutable during inference;
/// the trainer owns a mutable copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    layers: Vec<ConvLayer<S>>,
    encoder_stages: usize,
}

impl<S: Scalar> ModelParams<S> {
    pub(crate) fn from_layers(layers: Vec<ConvLayer<S>>, encoder_stages: usize) -> Self {
        ModelParams {
            layers,
            encoder_stages,
        }
    }

    pub fn layers(&self) -> &[ConvLayer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<S>] {
        &mut self.layers
    }

    pub fn encoder_stages(&self) -> usize {
        self.encoder_stages
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.all_finite() && l.bias.all_finite())
    }

    /// Converts parameter precision (used at the weights-file boundary).
    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    id: l.id.clone(),
                    weights: l.weights.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
            encoder_stages: self.encoder_stages,
        }
    }

    /// Checks that layer count and tensor shapes match `config`'s plan.
    pub fn check_matches(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        let expected = config.conv_channels();
        if expected.len() != self.layers.len() {
            return Err(Error::Format {
                field: "layer_count",
                detail: format!(
                    "config expects {} conv layers, params hold {}",
                    expected.len(),
                    self.layers.len()
                ),
            });
        }
        for (layer, &(out_c, in_c)) in self.layers.iter().zip(&expected) {
            if layer.weights.shape() != [out_c, in_c, 3, 3] {
                return Err(Error::Format {
                    field: "dims",
                    detail: format!(
                        "layer `{}` weights {:?} != expected [{out_c}, {in_c}, 3, 3]",
                        layer.id,
                        layer.weights.shape()
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Builds freshly initialized parameters for `config`'s plan.
///
/// Weights are He-style draws `Normal(0, sqrt(2 / fan_in))` from a ChaCha
/// stream seeded with `config.seed`; biases start at zero.
pub fn build_model<S: Scalar>(config: &ModelConfig) -> Result<ModelParams<S>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ids = config.layer_ids();
    let mut layers = Vec::with_capacity(ids.len());
    for (id, (out_c, in_c)) in ids.into_iter().zip(config.conv_channels()) {
        let fan_in = in_c * KERNEL_AREA;
        let sigma = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        let data = (0..out_c * in_c * KERNEL_AREA)
            .map(|_| S::from_f64_c(normal.sample(&mut rng)))
            .collect();
        layers.push(ConvLayer {
            id,
            weights: Tensor::new(vec![out_c, in_c, 3, 3], data)?,
            bias: Tensor::zeros(&[out_c]),
        });
    }
    Ok(ModelParams::from_layers(layers, config.stages()))
}

enum TraceStep<S> {
    Conv {
        layer: usize,
        input: Tensor<S>,
        pre_activation: Tensor<S>,
        /// Saved only for the sigmoid layer, whose backward needs `y`.
        activated: Option<Tensor<S>>,
    },
    Pool(PoolIndices),
    Upsample,
}

/// Intermediate values captured during a forward pass, sufficient to run the
/// backward pass and to inspect the spatial trace.
pub struct ForwardTrace<S> {
    steps: Vec<TraceStep<S>>,
    dims: Vec<(usize, usize)>,
}

impl<S> ForwardTrace<S> {
    /// Spatial size after each executed layer, in execution order.
    pub fn spatial_dims(&self) -> &[(usize, usize)] {
        &self.dims
    }
}

/// Runs inference and returns the probability mask together with the trace
/// needed for a backward pass.
pub fn forward_trace<S: Scalar>(
    params: &ModelParams<S>,
    image: &Tensor<S>,
) -> Result<(ProbMask<S>, ForwardTrace<S>)> {
    let shape = image.shape();
    if shape.len() != 3 {
        return Err(Error::shape("forward", "[C, H, W]", format!("{shape:?}")));
    }
    let first_in = params.layers[0].weights.shape()[1];
    if shape[0] != first_in {
        return Err(Error::shape(
            "forward",
            format!("{first_in} input channels"),
            format!("{} input channels", shape[0]),
        ));
    }
    let div = 1usize << params.encoder_stages;
    if shape[1] % div != 0 || shape[2] % div != 0 {
        return Err(Error::shape(
            "forward",
            format!("spatial dims divisible by {div}"),
            format!("{}x{}", shape[1], shape[2]),
        ));
    }

    let n_layers = params.layers.len();
    let mut steps = Vec::with_capacity(2 * n_layers);
    let mut dims = Vec::with_capacity(2 * n_layers);
    let mut current = image.clone();

    for (k, layer) in params.layers.iter().enumerate() {
        let decoder = k >= params.encoder_stages;
        if decoder {
            current = upsample2_forward(&current)?;
            dims.push((current.shape()[1], current.shape()[2]));
            steps.push(TraceStep::Upsample);
        }
        let pre = conv2d_forward(&current, &layer.weights, &layer.bias)?;
        let last = k + 1 == n_layers;
        let activated = if last {
            sigmoid_forward(&pre)
        } else {
            relu_forward(&pre)
        };
        dims.push((pre.shape()[1], pre.shape()[2]));
        steps.push(TraceStep::Conv {
            layer: k,
            input: current,
            pre_activation: pre,
            activated: last.then(|| activated.clone()),
        });
        current = activated;
        if !decoder {
            let (pooled, indices) = maxpool2_forward(&current)?;
            dims.push((pooled.shape()[1], pooled.shape()[2]));
            steps.push(TraceStep::Pool(indices));
            current = pooled;
        }
    }

    let prob = ProbMask::from_activation(current)?;
    Ok((prob, ForwardTrace { steps, dims }))
}

/// Inference without trace capture.
pub fn forward<S: Scalar>(params: &ModelParams<S>, image: &Tensor<S>) -> Result<ProbMask<S>> {
    forward_trace(params, image).map(|(prob, _)| prob)
}

/// Backpropagates `output_grad` (w.r.t. the pre-clamp probability mask)
/// through the trace, returning `(d_weights, d_bias)` per conv layer in
/// execution order.
pub fn backward<S: Scalar>(
    params: &ModelParams<S>,
    trace: &ForwardTrace<S>,
    output_grad: &Tensor<S>,
) -> Result<Vec<(Tensor<S>, Tensor<S>)>> {
    let mut grads: Vec<Option<(Tensor<S>, Tensor<S>)>> = vec![None; params.layers.len()];
    let mut g = output_grad.clone();
    for step in trace.steps.iter().rev() {
        match step {
            TraceStep::Conv {
                layer,
                input,
                pre_activation,
                activated,
            } => {
                g = match activated {
                    Some(y) => sigmoid_backward(y, &g)?.input_grad,
                    None => relu_backward(pre_activation, &g)?.input_grad,
                };
                let mut lg = conv2d_backward(input, &params.layers[*layer].weights, &g)?;
                let d_bias = lg.param_grads.pop().expect("conv bias grad");
                let d_weights = lg.param_grads.pop().expect("conv weight grad");
                grads[*layer] = Some((d_weights, d_bias));
                g = lg.input_grad;
            }
            TraceStep::Pool(indices) => {
                g = maxpool2_backward(indices, &g)?.input_grad;
            }
            TraceStep::Upsample => {
                g = upsample2_backward(&g)?.input_grad;
            }
        }
    }
    Ok(grads.into_iter().map(|g| g.expect("layer grad")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_has_six_convs_with_expected_first_shape() {
        let params: ModelParams<f64> = build_model(&ModelConfig::default()).unwrap();
        assert_eq!(params.layers().len(), 6);
        assert_eq!(params.layers()[0].weights.shape(), &[16, 3, 3, 3]);
        assert_eq!(params.layers()[0].id, "enc1_conv");
        assert_eq!(params.layers()[5].id, "dec3_conv");
        assert_eq!(params.layers()[5].weights.shape(), &[1, 16, 3, 3]);
    }

    #[test]
    fn parameter_count_matches_hand_computation() {
        // 16*3*9+16 + 32*16*9+32 + 64*32*9+64 + 32*64*9+32 + 16*32*9+16 + 1*16*9+1
        let config = ModelConfig::default();
        assert_eq!(config.parameter_count(), 46_817);
        let params: ModelParams<f64> = build_model(&config).unwrap();
        assert_eq!(params.parameter_count(), 46_817);
    }

    #[test]
    fn same_seed_is_bitwise_identical_and_seeds_differ() {
        let config = ModelConfig::default();
        let a: ModelParams<f64> = build_model(&config).unwrap();
        let b: ModelParams<f64> = build_model(&config).unwrap();
        assert_eq!(a, b);
        let other = ModelConfig {
            seed: config.seed + 1,
            ..config
        };
        let c: ModelParams<f64> = build_model(&other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn indivisible_input_size_is_a_config_error() {
        let config = ModelConfig {
            input_size: (200, 150),
            ..ModelConfig::default()
        };
        assert!(matches!(
            build_model::<f64>(&config).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn asymmetric_stages_are_a_config_error() {
        let config = ModelConfig {
            decoder_channels: vec![16, 1],
            ..ModelConfig::default()
        };
        assert!(build_model::<f64>(&config).is_err());
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            input_size: (16, 16),
            input_channels: 3,
            encoder_channels: vec![4, 8],
            decoder_channels: vec![4, 1],
            seed: 11,
        }
    }

    #[test]
    fn zero_image_with_fresh_params_gives_exactly_half() {
        // biases are zero, so conv(0) = 0, relu(0) = 0, sigmoid(0) = 0.5
        let params: ModelParams<f64> = build_model(&small_config()).unwrap();
        let image = Tensor::zeros(&[3, 16, 16]);
        let prob = forward(&params, &image).unwrap();
        assert!(prob.values().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_is_deterministic_and_pure() {
        let params: ModelParams<f64> = build_model(&small_config()).unwrap();
        let image = Tensor::new(
            vec![3, 16, 16],
            (0..3 * 256).map(|i| (i % 97) as f64 / 97.0).collect(),
        )
        .unwrap();
        let a = forward(&params, &image).unwrap();
        let b = forward(&params, &image).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_rejects_wrong_shapes() {
        let params: ModelParams<f64> = build_model(&small_config()).unwrap();
        assert!(forward(&params, &Tensor::zeros(&[4, 16, 16])).is_err());
        assert!(forward(&params, &Tensor::zeros(&[3, 18, 16])).is_err());
    }

    #[test]
    fn spatial_trace_contracts_and_expands() {
        let params: ModelParams<f64> = build_model(&ModelConfig::default()).unwrap();
        let image = Tensor::zeros(&[3, 200, 200]);
        let (_, trace) = forward_trace(&params, &image).unwrap();
        let mut sizes = vec![200];
        for &(h, w) in trace.spatial_dims() {
            assert_eq!(h, w);
            if *sizes.last().unwrap() != h {
                sizes.push(h);
            }
        }
        assert_eq!(sizes, vec![200, 100, 50, 25, 50, 100, 200]);
    }

    #[test]
    fn check_matches_flags_layer_count_mismatch() {
        let params: ModelParams<f64> = build_model(&small_config()).unwrap();
        let err = params.check_matches(&ModelConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::Format {
                field: "layer_count",
                ..
            }
        ));
    }
}
