//! Spectral reconstruction from RGB with a shallow residual CNN.
//!
//! The crate carries its own tensor primitives and reverse-mode passes, the
//! Adam training loop, the data pipeline (hyperspectral cube I/O, RGB
//! synthesis, patching and augmentation), whole-image inference with
//! enhanced prediction, and the RMSE/rRMSE metric family.

pub mod checkpoint;
pub mod conv;
pub mod data;
pub mod error;
pub mod gemm;
pub mod gradcheck;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod workflow;

pub use error::{Error, Result};
pub use model::{ModelConfig, ModelParams};
pub use tensor::{ConvFilter, PReluSlopes, Scalar, Tensor4};
