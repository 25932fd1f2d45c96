//! A small neural-network engine: row-major matrices, hand-derived layer
//! gradients, MSE and Adam. Everything is `f64` so finite-difference checks
//! are meaningful.

pub mod layers;
pub mod loss;
pub mod matrix;
pub mod network;
pub mod ops;
pub mod param;

pub use layers::{Conv1d, Dense, Flatten, Layer, LayerSpec, Lstm, MaxPool1d, Relu, Tanh};
pub use loss::mse_loss;
pub use matrix::RealMatrix;
pub use network::Network;
pub use ops::{
    conv1d_forward, dense_forward, lstm_forward, lstm_forward_from, lstm_step, maxpool1d_forward,
    sigmoid, LstmCache, LstmWeights,
};
pub use param::{Init, ParamTensor, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
