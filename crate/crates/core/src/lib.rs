//! adlocus core: a self-contained binary-segmentation engine.
//!
//! The crate provides, from the ground up:
//!
//! * dense tensors and hand-written forward/backward passes for the layer
//!   set used by the model ([`ops`]);
//! * a small encoder-decoder network mapping an RGB image to a per-pixel
//!   probability mask ([`model`]);
//! * deterministic mini-batch training with SGD or Adam ([`train`]);
//! * dataset manifests, PNG image/mask loading, and a synthetic scene
//!   generator for desk-scale experiments ([`data`]);
//! * segmentation metrics (pixel accuracy, mean accuracy, mean IOU,
//!   frequency-weighted IOU), threshold sweeps, and ROC points ([`metrics`]).
//!
//! Numeric code is generic over the scalar type ([`Scalar`]); `f64` is the
//! working precision and `f32` the on-disk weight precision. The [`reference`]
//! module carries naive reference implementations used by the test suites.

pub mod data;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod reference;
pub mod scalar;
pub mod tensor;
pub mod train;
mod weights;

pub use error::{Error, Result};
pub use mask::{BinaryMask, ProbMask};
pub use scalar::Scalar;

/// Default working-precision tensor.
pub type Tensor64 = tensor::Tensor<f64>;
/// Storage-precision tensor (weight files hold `f32` values).
pub type Tensor32 = tensor::Tensor<f32>;
