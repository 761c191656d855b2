//! Fire-spread emulation toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`grids`]: rasters, weather series and their plain-text file formats.
//! * [`firesim`]: an anisotropic rate-of-spread simulator producing arrival-time
//!   rasters, plus synthetic scene and weather generators.
//! * [`preprocess`]: conversion of simulator output into normalized model samples,
//!   cropping and dihedral augmentation.
//! * [`tensor`]: a small reverse-mode differentiable array engine (convolutions,
//!   pointwise ops, ADAM, finite-difference gradient checks), generic over the
//!   floating-point type.
//! * [`emulator`]: the strided-convolution encoder, weather-conditioned recurrent
//!   cell and transposed-convolution decoder, with its log-MSE-ratio loss and
//!   training loop.
//! * [`metrics`]: burn masks, Jaccard/Dice scores and signed difference maps.
//! * [`ensemble`]: weather-perturbation ensembles and probability-of-arrival maps.
//!
//! Training runs in `f32`; gradient verification replays the same computation in
//! `f64`. The aliases below name the two instantiations.

pub mod dataset;
pub mod emulator;
pub mod ensemble;
mod error;
pub mod firesim;
pub mod grids;
pub mod kv;
pub mod metrics;
pub mod preprocess;
mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision tensor used for training and inference.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision tensor used for gradient-check replay.
pub type Tensor64 = tensor::Tensor<f64>;
pub type ParamStore32 = tensor::ParamStore<f32>;
pub type ParamStore64 = tensor::ParamStore<f64>;
pub type Graph32<'p> = tensor::Graph<'p, f32>;
pub type Graph64<'p> = tensor::Graph<'p, f64>;
pub type AdamState32 = tensor::AdamState<f32>;
