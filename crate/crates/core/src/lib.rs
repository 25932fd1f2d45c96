//! Frame delivery ratio forecasting for Wi-Fi links.
//!
//! Predicts the fraction of frames that will be delivered over a future
//! horizon from a binary history of per-frame outcomes. The crate covers the
//! whole pipeline:
//!
//! - [`channel`]: Gilbert-Elliott trace generator for reproducible inputs
//! - [`data`]: trace ingestion, targets, windowing and chronological splits
//! - [`nn`]: a minimal `f64` network engine with hand-written gradients
//! - [`models`]: the CNN and LSTM regressors plus checkpoints
//! - [`training`]: Adam/MSE training with halving learning rate and early stopping
//! - [`hypertune`]: exhaustive grid search over batch size, width and input length
//! - [`eval`]: prediction-error statistics, inference benchmarks and reports

pub mod channel;
pub mod checkpoint;
pub mod data;
pub mod dataset;
pub mod digest;
pub mod error;
pub mod eval;
pub mod hypertune;
pub mod models;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
