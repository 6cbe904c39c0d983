//! Spatiotemporal sequence-to-sequence forecasting on gridded data with
//! factorized 3D convolutions and causal temporal blocks.
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`] and [`autodiff`]: dense tensors, conv kernels and a
//!   reverse-mode tape.
//! - [`layers`]: parameterized units, the parameter store and checkpoints.
//! - [`model`]: model configuration, the temporal-strategy and architecture
//!   registries, and the assembled forecaster.
//! - [`data`], [`train`], [`metrics`]: gridded sequence files, windowing,
//!   RMSprop training with early stopping, and evaluation.
//! - [`gradcheck`] and [`probe`]: finite-difference and causality harnesses.

pub mod ablation;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod probe;
pub mod rng;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use tensor::{PadSpec, Precision, Scalar, Tensor};
