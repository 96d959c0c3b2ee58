//! Spiking neural network runtime with temporal attribution maps.
//!
//! The numeric core (tensors, kernels, reverse-mode autodiff) is generic over
//! the floating-point scalar via [`scalar::Scalar`]. The domain layers (LIF
//! dynamics, training, conversion, interpretation, evaluation) run in f64;
//! checkpoints store parameters as f32.

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod io;
pub mod kernels;
pub mod rng;
pub mod scalar;
pub mod snn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Tensor in the precision used by the domain layers.
pub type Tensor64 = tensor::Tensor<f64>;
/// Tensor in checkpoint storage precision.
pub type Tensor32 = tensor::Tensor<f32>;
/// Autodiff tape in the precision used by the domain layers.
pub type Tape64 = autodiff::Tape<f64>;
