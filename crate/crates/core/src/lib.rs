//! Local-global grid LSTM for semantic part parsing.
//!
//! Every layer is written as an explicit forward function paired with a
//! hand-derived backward function; there is no autodiff tape. The crate is
//! split along the data flow of the network:
//!
//! - [`numerics`]: dense tensors and differentiable primitives,
//! - [`lstm`]: the LSTM transition shared by every cell,
//! - [`layer`]: one local-global layer (global pooling, input assembly, routing),
//! - [`transition`]: adapter from convolutional features to the first layer state,
//! - [`network`]: stem, stacked layers, per-layer heads and deep supervision,
//! - [`training`]: PRNG, SGD with momentum, the training loop and gradient checking,
//! - [`dataio`]: synthetic data, PNM images and segmentation metrics,
//! - [`checkpoint`]: versioned binary parameter files.

pub mod checkpoint;
pub mod dataio;
pub mod error;
pub mod layer;
pub mod lstm;
pub mod network;
pub mod numerics;
pub mod training;
pub mod transition;

pub use error::{CheckpointError, Error, Result};
pub use numerics::{Precision, Scalar, Tensor};
