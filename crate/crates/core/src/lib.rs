//! Localized-discrepancy features for telling generated images from real ones.
//!
//! The front end computes two per-pixel maps: a local gradient autocorrelation
//! residual ([`lga`]) and an 8-neighbor local variation pattern ([`lvp`]). They
//! are stacked and fed to a small convolutional classifier ([`classifier`])
//! trained with Adam on binary cross-entropy. [`corpus`] generates a seeded
//! natural/smoothed dataset and the robustness perturbations, [`metrics`]
//! scores predictions, and [`cli`] wires everything into reproducible runs.

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod lga;
pub mod lvp;
pub mod metrics;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{PaddingMode, Tensor};
