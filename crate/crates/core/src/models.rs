//! The CNN and LSTM delivery-ratio regressors.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::nn::{Init, LayerSpec, Network, RealMatrix};

pub const CONV_KERNEL: usize = 3;
pub const POOL_WIDTH: usize = 2;
pub const CNN_DENSE_UNITS: [usize; 2] = [128, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Lstm,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Cnn => "CNN",
            ModelKind::Lstm => "LSTM",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ModelKind::Cnn),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::InvalidParameter(format!("unknown model kind {other:?}"))),
        }
    }
}

/// The tuned quantities: batch size, width (CNN filters or LSTM units) and
/// input window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub width: usize,
    pub input_length: usize,
}

impl Hyperparams {
    pub fn new(batch_size: usize, width: usize, input_length: usize) -> Result<Self> {
        let hp = Self {
            batch_size,
            width,
            input_length,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.width == 0 || self.input_length == 0 {
            return Err(Error::InvalidParameter(format!(
                "hyperparameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Key used for file names and seed derivation.
    pub fn key(&self) -> String {
        format!("l{}_n{}_b{}", self.input_length, self.width, self.batch_size)
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "b={} n={} l={}",
            self.batch_size, self.width, self.input_length
        )
    }
}

/// A named bundle of model, training and target settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: &'static str,
    pub kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub epochs: usize,
    pub horizon: usize,
}

pub const PRESETS: [Preset; 4] = [
    Preset {
        name: "paper-cnn",
        kind: ModelKind::Cnn,
        hyperparams: Hyperparams { batch_size: 64, width: 128, input_length: 3600 },
        epochs: 30,
        horizon: 3600,
    },
    Preset {
        name: "paper-lstm",
        kind: ModelKind::Lstm,
        hyperparams: Hyperparams { batch_size: 32, width: 25, input_length: 1200 },
        epochs: 15,
        horizon: 3600,
    },
    Preset {
        name: "toy-cnn",
        kind: ModelKind::Cnn,
        hyperparams: Hyperparams { batch_size: 32, width: 8, input_length: 64 },
        epochs: 8,
        horizon: 64,
    },
    Preset {
        name: "toy-lstm",
        kind: ModelKind::Lstm,
        hyperparams: Hyperparams { batch_size: 32, width: 8, input_length: 64 },
        epochs: 8,
        horizon: 64,
    },
];

impl Preset {
    pub fn by_name(name: &str) -> Result<Preset> {
        PRESETS.iter().copied().find(|p| p.name == name).ok_or_else(|| {
            let names: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
            Error::InvalidParameter(format!("unknown preset {name:?} (available: {names:?})"))
        })
    }

    pub fn paper(kind: ModelKind) -> Preset {
        match kind {
            ModelKind::Cnn => PRESETS[0],
            ModelKind::Lstm => PRESETS[1],
        }
    }

    pub fn toy(kind: ModelKind) -> Preset {
        match kind {
            ModelKind::Cnn => PRESETS[2],
            ModelKind::Lstm => PRESETS[3],
        }
    }
}

/// A model with its training history. Untrained models have an empty trace.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub network: Network,
    pub val_loss_trace: Vec<f64>,
    /// 1-based epoch whose parameters are held; 0 when untrained.
    pub best_epoch: usize,
}

/// Layer sizes after each stage of the CNN for input length `l` and `n` filters:
/// `(conv_len, pooled_len, flatten_size)`.
pub fn cnn_shapes(input_length: usize, filters: usize) -> Result<(usize, usize, usize)> {
    if input_length < CONV_KERNEL + 1 {
        return Err(Error::Topology(format!(
            "CNN needs input length >= {} so convolution and pooling are nonempty, got {input_length}",
            CONV_KERNEL + 1
        )));
    }
    let conv = input_length - CONV_KERNEL + 1;
    let pooled = conv / POOL_WIDTH;
    Ok((conv, pooled, pooled * filters))
}

/// Conv1D(n, k=3) -> ReLU -> MaxPool(2) -> Flatten -> Dense(128) -> ReLU ->
/// Dense(64) -> ReLU -> Dense(1).
pub fn cnn_layout(hp: &Hyperparams) -> Result<Vec<(LayerSpec, Init)>> {
    hp.validate()?;
    let (_, _, flat) = cnn_shapes(hp.input_length, hp.width)?;
    let [d1, d2] = CNN_DENSE_UNITS;
    Ok(vec![
        (
            LayerSpec::Conv1d { in_channels: 1, filters: hp.width, kernel: CONV_KERNEL },
            Init::HeUniform,
        ),
        (LayerSpec::Relu, Init::Zeros),
        (LayerSpec::Maxpool1d { width: POOL_WIDTH }, Init::Zeros),
        (LayerSpec::Flatten, Init::Zeros),
        (LayerSpec::Dense { inputs: flat, units: d1 }, Init::HeUniform),
        (LayerSpec::Relu, Init::Zeros),
        (LayerSpec::Dense { inputs: d1, units: d2 }, Init::HeUniform),
        (LayerSpec::Relu, Init::Zeros),
        (LayerSpec::Dense { inputs: d2, units: 1 }, Init::GlorotUniform),
    ])
}

/// LSTM(n) over the scalar sequence -> Dense(1) on the final hidden state.
pub fn lstm_layout(hp: &Hyperparams) -> Result<Vec<(LayerSpec, Init)>> {
    hp.validate()?;
    Ok(vec![
        (LayerSpec::Lstm { inputs: 1, units: hp.width }, Init::GlorotUniform),
        (LayerSpec::Dense { inputs: hp.width, units: 1 }, Init::GlorotUniform),
    ])
}

pub fn build_cnn(hp: Hyperparams, seed: u64) -> Result<TrainedModel> {
    build(ModelKind::Cnn, hp, seed)
}

pub fn build_lstm(hp: Hyperparams, seed: u64) -> Result<TrainedModel> {
    build(ModelKind::Lstm, hp, seed)
}

pub fn build(kind: ModelKind, hp: Hyperparams, seed: u64) -> Result<TrainedModel> {
    let layout = match kind {
        ModelKind::Cnn => cnn_layout(&hp)?,
        ModelKind::Lstm => lstm_layout(&hp)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(TrainedModel {
        kind,
        hyperparams: hp,
        network: Network::build(&layout, &mut rng)?,
        val_loss_trace: Vec::new(),
        best_epoch: 0,
    })
}

/// Converts a bit window into the `[l x 1]` model input.
pub fn pattern_matrix(pattern: &[u8]) -> RealMatrix {
    let values = pattern.iter().map(|&b| b as f64).collect();
    RealMatrix::from_raw(pattern.len(), 1, values)
}

impl TrainedModel {
    /// Raw regression output for one window; not clamped to `[0, 1]`.
    pub fn predict(&self, pattern: &[u8]) -> Result<f64> {
        self.check_pattern(pattern)?;
        let out = self.network.infer(&pattern_matrix(pattern))?;
        Ok(out.values()[0])
    }

    /// Predicts every pattern; parallel across patterns, order preserved.
    pub fn predict_many(&self, patterns: &[&[u8]]) -> Result<Vec<f64>> {
        patterns.par_iter().map(|p| self.predict(p)).collect()
    }

    pub fn predict_dataset(&self, dataset: &WindowedDataset) -> Result<Vec<f64>> {
        if dataset.window_length() != self.hyperparams.input_length {
            return Err(Error::Dimension {
                op: "predict",
                expected: format!("windows of length {}", self.hyperparams.input_length),
                found: format!("windows of length {}", dataset.window_length()),
            });
        }
        (0..dataset.len())
            .into_par_iter()
            .map(|k| self.predict(dataset.pattern(k)))
            .collect()
    }

    pub(crate) fn check_pattern(&self, pattern: &[u8]) -> Result<()> {
        if pattern.len() != self.hyperparams.input_length {
            return Err(Error::Dimension {
                op: "predict",
                expected: format!("pattern of length {}", self.hyperparams.input_length),
                found: format!("pattern of length {}", pattern.len()),
            });
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.network.parameter_count()
    }

    /// Sets every parameter to zero.
    pub fn zero_parameters(&mut self) {
        for p in self.network.params_mut() {
            p.value.fill(0.0);
        }
    }
}

/// Closed-form LSTM parameter count: gates plus the dense head.
pub fn lstm_parameter_count(units: usize) -> usize {
    4 * (units * (1 + units) + units) + units + 1
}

/// Closed-form CNN parameter count.
pub fn cnn_parameter_count(input_length: usize, filters: usize) -> Result<usize> {
    let (_, _, flat) = cnn_shapes(input_length, filters)?;
    let [d1, d2] = CNN_DENSE_UNITS;
    Ok(CONV_KERNEL * filters + filters + flat * d1 + d1 + d1 * d2 + d2 + d2 + 1)
}
