//! Multivariate time-series anomaly detection by latent predictive coding.
//!
//! A sequence autoencoder learns a compact latent representation of sliding
//! windows; a latent predictor forecasts the next window's latents from the
//! history, and training decodes randomly perturbed future latents so the
//! decoder tolerates prediction error. At detection time each future point is
//! scored by its reconstruction error.

pub mod checkpoint;
pub mod data;
pub mod detect;
mod error;
pub mod kv;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod protocol;
mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
