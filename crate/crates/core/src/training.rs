//! Mini-batch training: MSE loss, Adam, a learning rate halved every epoch,
//! and early stopping on validation MSE with best-epoch restoration.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::models::{pattern_matrix, ModelKind, Preset, TrainedModel};
use crate::nn::{mse_loss, RealMatrix};

pub const DEFAULT_INITIAL_LR: f64 = 0.01;
pub const DEFAULT_PATIENCE: usize = 3;
pub const DEFAULT_TRAIN_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epoch_budget: usize,
    pub initial_lr: f64,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub shuffle_seed: u64,
    /// Stride used when windowing the training split. Validation and test
    /// splits are windowed at stride 1 unless configured otherwise.
    pub train_stride: usize,
}

impl TrainConfig {
    pub fn for_preset(preset: &Preset, shuffle_seed: u64) -> Self {
        Self {
            epoch_budget: preset.epochs,
            initial_lr: DEFAULT_INITIAL_LR,
            batch_size: preset.hyperparams.batch_size,
            early_stop_patience: DEFAULT_PATIENCE,
            shuffle_seed,
            train_stride: DEFAULT_TRAIN_STRIDE,
        }
    }

    pub fn paper(kind: ModelKind, shuffle_seed: u64) -> Self {
        Self::for_preset(&Preset::paper(kind), shuffle_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epoch_budget == 0 {
            return Err(Error::InvalidParameter("epoch budget must be >= 1".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "initial learning rate must be > 0, got {}",
                self.initial_lr
            )));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::InvalidParameter("early-stop patience must be >= 1".into()));
        }
        if self.batch_size == 0 || self.train_stride == 0 {
            return Err(Error::InvalidParameter("batch size and stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn lr(&self, epoch: usize) -> Result<f64> {
        lr_schedule(self.initial_lr, epoch)
    }
}

/// `initial_lr * 2^-(epoch - 1)` for 1-based `epoch`.
pub fn lr_schedule(initial_lr: f64, epoch: usize) -> Result<f64> {
    if epoch == 0 {
        return Err(Error::Domain("epochs are numbered from 1".into()));
    }
    Ok(initial_lr * 0.5f64.powi((epoch - 1) as i32))
}

/// Early-stopping bookkeeping over a stream of validation losses.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    stale_epochs: usize,
    epochs_seen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    /// The last epoch is the new best.
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            stale_epochs: 0,
            epochs_seen: 0,
        }
    }

    /// Records the next epoch's loss. Any strict decrease counts as progress.
    pub fn observe(&mut self, loss: f64) -> StopDecision {
        self.epochs_seen += 1;
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = self.epochs_seen;
            self.stale_epochs = 0;
            return StopDecision::Improved;
        }
        self.stale_epochs += 1;
        if self.stale_epochs >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    /// Replays a whole trace: `(epochs run before stopping, best epoch)`.
    pub fn replay(trace: &[f64], patience: usize, budget: usize) -> (usize, usize) {
        let mut es = EarlyStopping::new(patience);
        for (k, &loss) in trace.iter().take(budget).enumerate() {
            if es.observe(loss) == StopDecision::Stop {
                return (k + 1, es.best_epoch);
            }
        }
        (trace.len().min(budget), es.best_epoch)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_mse: f64,
    pub val_mse: f64,
    pub elapsed_s: f64,
}

pub const EPOCH_LOG_HEADER: &str = "epoch,lr,train_mse,val_mse,elapsed_s";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3}",
            self.epoch, self.lr, self.train_mse, self.val_mse, self.elapsed_s
        )
    }
}

/// Summary returned alongside the trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub stopped_early: bool,
}

/// Mean squared error of the model over a dataset.
pub fn validation_loss(model: &TrainedModel, set: &WindowedDataset) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyInput("validation_loss"));
    }
    let predictions = model.predict_dataset(set)?;
    mse(&predictions, set.targets())
}

pub(crate) fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    mse_loss(predictions, targets).map(|(loss, _)| loss)
}

pub fn train(
    model: TrainedModel,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainReport)> {
    train_with_observer(model, train_set, val_set, config, |_| {})
}

/// Like [`train`], calling `on_epoch` after each epoch's validation.
pub fn train_with_observer(
    mut model: TrainedModel,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(TrainedModel, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyInput("validation set"));
    }
    let l = model.hyperparams.input_length;
    for (name, ds) in [("training", train_set), ("validation", val_set)] {
        if ds.window_length() != l {
            return Err(Error::Dimension {
                op: "train",
                expected: format!("{name} windows of length {l}"),
                found: format!("length {}", ds.window_length()),
            });
        }
    }
    if config.batch_size > train_set.len() {
        return Err(Error::Precondition(format!(
            "batch size {} exceeds training set of {} windows",
            config.batch_size,
            train_set.len()
        )));
    }

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let mut best_params = model.network.snapshot();
    let mut trace = Vec::with_capacity(config.epoch_budget);
    let mut logs = Vec::with_capacity(config.epoch_budget);
    let mut stopped_early = false;

    for epoch in 1..=config.epoch_budget {
        let lr = config.lr(epoch)?;
        order.shuffle(&mut rng);
        let mut sq_sum = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let diverged = || Error::Divergence {
                epoch,
                batch: batch_idx + 1,
                completed_trace: trace.clone(),
            };
            model.network.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_sq = 0.0;
            for &k in batch {
                let out = model.network.forward(&pattern_matrix(train_set.pattern(k)))?;
                let prediction = out.values()[0];
                let (loss, grad) = mse_loss(&[prediction], &[train_set.target(k)])?;
                if !loss.is_finite() {
                    return Err(diverged());
                }
                batch_sq += loss;
                let g = RealMatrix::from_raw(1, 1, vec![grad[0] * scale]);
                model.network.backward(&g)?;
            }
            if !batch_sq.is_finite() {
                return Err(diverged());
            }
            model.network.adam_step(lr).map_err(|_| diverged())?;
            if !model.network.all_finite() {
                return Err(diverged());
            }
            sq_sum += batch_sq;
        }
        let train_mse = sq_sum / train_set.len() as f64;
        let val_mse = validation_loss(&model, val_set)?;
        if !val_mse.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                completed_trace: trace,
            });
        }
        trace.push(val_mse);
        let log = EpochLog {
            epoch,
            lr,
            train_mse,
            val_mse,
            elapsed_s: started.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        logs.push(log);
        match stopper.observe(val_mse) {
            StopDecision::Improved => best_params = model.network.snapshot(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = epoch < config.epoch_budget;
                break;
            }
        }
    }

    model.network.restore(&best_params);
    model.val_loss_trace = trace;
    model.best_epoch = stopper.best_epoch();
    Ok((
        model,
        TrainReport {
            epochs: logs,
            stopped_early,
        },
    ))
}
