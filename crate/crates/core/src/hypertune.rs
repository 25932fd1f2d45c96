//! Exhaustive grid search over batch size, width and input length.
//!
//! Each grid point is trained once; its score is the mean validation loss
//! from the sixth epoch onward, and the best point minimizes that score.
//! Trials are persisted one JSON file each, so an interrupted search resumes
//! where it stopped.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_windows, OutcomeSeries};
use crate::digest::derive_seed;
use crate::error::{Error, Result};
use crate::models::{build, Hyperparams, ModelKind};
use crate::training::{train, EarlyStopping, TrainConfig};

/// Epochs excluded from the stable average: epochs 1..=5 are skipped.
pub const UNSTABLE_EPOCHS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub batch_sizes: Vec<usize>,
    pub widths: Vec<usize>,
    pub lengths: Vec<usize>,
}

impl SearchSpace {
    /// b in {32, 64, 128}, n in {64, 128, 256}, l in {1200, 1800, 3600}.
    pub fn paper() -> Self {
        Self {
            batch_sizes: vec![32, 64, 128],
            widths: vec![64, 128, 256],
            lengths: vec![1200, 1800, 3600],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_sizes.is_empty() || self.widths.is_empty() || self.lengths.is_empty() {
            return Err(Error::InvalidParameter("search space has an empty axis".into()));
        }
        Ok(())
    }

    /// Every grid point, ordered by length, then width, then batch size.
    pub fn grid(&self) -> Vec<Hyperparams> {
        let mut out = Vec::with_capacity(self.batch_sizes.len() * self.widths.len() * self.lengths.len());
        for &l in &self.lengths {
            for &n in &self.widths {
                for &b in &self.batch_sizes {
                    out.push(Hyperparams {
                        batch_size: b,
                        width: n,
                        input_length: l,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialStatus {
    Completed,
    StoppedEarly,
    Diverged,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Completed => "completed",
            TrialStatus::StoppedEarly => "stopped-early",
            TrialStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub epoch_budget: usize,
    pub epoch_losses: Vec<f64>,
    /// Present only when at least six epochs completed and the trial did not diverge.
    pub stable_avg: Option<f64>,
    pub seconds: f64,
    pub status: TrialStatus,
}

impl TrialRecord {
    pub fn from_trace(
        hyperparams: Hyperparams,
        seed: u64,
        epoch_budget: usize,
        epoch_losses: Vec<f64>,
        status: TrialStatus,
        seconds: f64,
    ) -> Self {
        let stable_avg = match status {
            TrialStatus::Diverged => None,
            _ => stable_avg_loss(&epoch_losses, epoch_budget).ok(),
        };
        Self {
            hyperparams,
            seed,
            epoch_budget,
            epoch_losses,
            stable_avg,
            seconds,
            status,
        }
    }

    pub fn is_comparable(&self) -> bool {
        self.stable_avg.is_some()
    }
}

/// Mean of the per-epoch losses from epoch 6 to the last completed epoch.
pub fn stable_avg_loss(trace: &[f64], epoch_budget: usize) -> Result<f64> {
    if trace.len() > epoch_budget {
        return Err(Error::InvalidParameter(format!(
            "trace of {} epochs exceeds budget {epoch_budget}",
            trace.len()
        )));
    }
    if trace.len() <= UNSTABLE_EPOCHS {
        return Err(Error::InsufficientEpochs(trace.len()));
    }
    let tail = &trace[UNSTABLE_EPOCHS..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Orders comparable trials: lower stable average first, ties broken by
/// smaller length, then width, then batch size.
fn rank(a: &TrialRecord, b: &TrialRecord) -> Ordering {
    let (sa, sb) = (a.stable_avg.unwrap_or(f64::INFINITY), b.stable_avg.unwrap_or(f64::INFINITY));
    sa.total_cmp(&sb).then_with(|| {
        let key = |t: &TrialRecord| {
            (t.hyperparams.input_length, t.hyperparams.width, t.hyperparams.batch_size)
        };
        key(a).cmp(&key(b))
    })
}

pub fn select_best(trials: &[TrialRecord]) -> Result<Hyperparams> {
    trials
        .iter()
        .filter(|t| t.is_comparable())
        .min_by(|a, b| rank(a, b))
        .map(|t| t.hyperparams)
        .ok_or_else(|| {
            Error::Selection(format!(
                "none of {} trials has a stable average (need >= 6 epochs, no divergence)",
                trials.len()
            ))
        })
}

/// Per-trial seed derived from the master seed and the grid point.
pub fn trial_seed(master: u64, hp: &Hyperparams) -> u64 {
    derive_seed(master, &hp.key())
}

/// The per-epoch validation losses of one trial, or why it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub epoch_losses: Vec<f64>,
    pub status: TrialStatus,
}

/// Something that can evaluate one grid point. The training implementation
/// is [`TrainingRunner`]; tests substitute deterministic stubs.
pub trait TrialRunner: Sync {
    fn epoch_budget(&self) -> usize;
    fn run_trial(&self, hp: &Hyperparams, seed: u64) -> Result<TrialOutcome>;
}

/// Trains a real model per grid point on fixed train/validation segments.
pub struct TrainingRunner {
    pub kind: ModelKind,
    pub train: OutcomeSeries,
    pub validation: OutcomeSeries,
    pub horizon: usize,
    pub validation_stride: usize,
    /// Batch size and seed are overwritten per trial.
    pub template: TrainConfig,
}

impl TrialRunner for TrainingRunner {
    fn epoch_budget(&self) -> usize {
        self.template.epoch_budget
    }

    fn run_trial(&self, hp: &Hyperparams, seed: u64) -> Result<TrialOutcome> {
        let train_set = make_windows(&self.train, hp.input_length, self.horizon, self.template.train_stride)?;
        let val_set = make_windows(&self.validation, hp.input_length, self.horizon, self.validation_stride)?;
        let model = build(self.kind, *hp, seed)?;
        let config = TrainConfig {
            batch_size: hp.batch_size,
            shuffle_seed: seed,
            ..self.template
        };
        match train(model, &train_set, &val_set, &config) {
            Ok((model, report)) => Ok(TrialOutcome {
                epoch_losses: model.val_loss_trace,
                status: if report.stopped_early {
                    TrialStatus::StoppedEarly
                } else {
                    TrialStatus::Completed
                },
            }),
            Err(Error::Divergence { completed_trace, .. }) => Ok(TrialOutcome {
                epoch_losses: completed_trace,
                status: TrialStatus::Diverged,
            }),
            Err(e) => Err(e),
        }
    }
}

/// A runner backed by a closure; used for stub-loss search runs.
pub struct FnRunner<F> {
    pub epoch_budget: usize,
    pub f: F,
}

impl<F> TrialRunner for FnRunner<F>
where
    F: Fn(&Hyperparams, u64) -> Result<TrialOutcome> + Sync,
{
    fn epoch_budget(&self) -> usize {
        self.epoch_budget
    }

    fn run_trial(&self, hp: &Hyperparams, seed: u64) -> Result<TrialOutcome> {
        (self.f)(hp, seed)
    }
}

/// Deterministic synthetic losses for exercising the search machinery:
/// a decaying curve whose plateau depends only on the grid point.
pub fn stub_trace(hp: &Hyperparams, epochs: usize) -> Vec<f64> {
    let plateau = stub_plateau(hp);
    (1..=epochs).map(|e| plateau + 1.0 / e as f64).collect()
}

pub fn stub_plateau(hp: &Hyperparams) -> f64 {
    let b = hp.batch_size as f64;
    let n = hp.width as f64;
    let l = hp.input_length as f64;
    (b / 64.0 - 1.0).powi(2) + (n / 128.0 - 1.0).powi(2) + (l / 1800.0 - 1.0).powi(2)
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub master_seed: u64,
    pub workers: usize,
    /// Directory for per-trial records; `None` keeps everything in memory.
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Hyperparams,
    /// One record per grid point, in grid order.
    pub trials: Vec<TrialRecord>,
    /// Grid points actually trained by this call (the rest were resumed).
    pub executed: usize,
}

pub fn run_search(space: &SearchSpace, runner: &dyn TrialRunner, options: &SearchOptions) -> Result<SearchResult> {
    space.validate()?;
    let grid = space.grid();
    let store = options.store.as_deref().map(TrialStore::open).transpose()?;
    let mut done: Vec<Option<TrialRecord>> = grid
        .iter()
        .map(|hp| store.as_ref().and_then(|s| s.load(hp).ok().flatten()))
        .collect();
    let pending: Vec<usize> = (0..grid.len()).filter(|&i| done[i].is_none()).collect();

    let run_one = |i: usize| -> Result<(usize, TrialRecord)> {
        let hp = grid[i];
        let seed = trial_seed(options.master_seed, &hp);
        let started = Instant::now();
        let outcome = runner.run_trial(&hp, seed)?;
        let record = TrialRecord::from_trace(
            hp,
            seed,
            runner.epoch_budget(),
            outcome.epoch_losses,
            outcome.status,
            started.elapsed().as_secs_f64(),
        );
        if let Some(store) = &store {
            store.save(&record)?;
        }
        Ok((i, record))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::SearchFailure(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<(usize, TrialRecord)>> =
        pool.install(|| pending.par_iter().map(|&i| run_one(i)).collect());
    let executed = results.len();
    for r in results {
        let (i, rec) = r?;
        done[i] = Some(rec);
    }
    let trials: Vec<TrialRecord> = done.into_iter().map(|r| r.expect("every grid point resolved")).collect();

    if let Some(store) = &store {
        store.write_summary(&trials)?;
    }
    if trials.iter().all(|t| t.status == TrialStatus::Diverged) {
        let statuses: Vec<String> = trials
            .iter()
            .map(|t| format!("{}: {}", t.hyperparams, t.status.as_str()))
            .collect();
        return Err(Error::SearchFailure(format!(
            "all trials diverged [{}]",
            statuses.join("; ")
        )));
    }
    let best = select_best(&trials)?;
    if let Some(store) = &store {
        store.write_best(&best)?;
    }
    Ok(SearchResult {
        best,
        trials,
        executed,
    })
}

/// Directory of per-trial JSON records plus summary outputs.
pub struct TrialStore {
    root: PathBuf,
}

pub const SUMMARY_HEADER: &str = "batch_size,width,input_length,stable_avg,status,seconds";

impl TrialStore {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join("trials"))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    fn trial_path(&self, hp: &Hyperparams) -> PathBuf {
        self.root.join("trials").join(format!("trial_{}.json", hp.key()))
    }

    pub fn load(&self, hp: &Hyperparams) -> Result<Option<TrialRecord>> {
        let path = self.trial_path(hp);
        if !path.exists() {
            return Ok(None);
        }
        let record: TrialRecord = serde_json::from_slice(&fs::read(path)?)?;
        Ok((record.hyperparams == *hp).then_some(record))
    }

    pub fn load_all(&self) -> Result<Vec<TrialRecord>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("trials"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                out.push(serde_json::from_slice(&fs::read(path)?)?);
            }
        }
        out.sort_by_key(|r: &TrialRecord| {
            let hp = r.hyperparams;
            (hp.input_length, hp.width, hp.batch_size)
        });
        Ok(out)
    }

    pub fn save(&self, record: &TrialRecord) -> Result<()> {
        write_atomic(
            &self.trial_path(&record.hyperparams),
            &serde_json::to_vec_pretty(record)?,
        )
    }

    pub fn write_summary(&self, trials: &[TrialRecord]) -> Result<()> {
        let mut csv = String::from(SUMMARY_HEADER);
        csv.push('\n');
        for t in trials {
            let avg = t.stable_avg.map(|v| v.to_string()).unwrap_or_default();
            csv.push_str(&format!(
                "{},{},{},{},{},{:.3}\n",
                t.hyperparams.batch_size,
                t.hyperparams.width,
                t.hyperparams.input_length,
                avg,
                t.status.as_str(),
                t.seconds
            ));
        }
        write_atomic(&self.root.join("summary.csv"), csv.as_bytes())
    }

    pub fn write_best(&self, best: &Hyperparams) -> Result<()> {
        write_atomic(&self.root.join("best.json"), &serde_json::to_vec_pretty(best)?)
    }
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Checks that a record's early-stop behaviour is consistent with its trace.
pub fn trace_consistent(record: &TrialRecord, patience: usize) -> bool {
    if record.status == TrialStatus::Diverged {
        return true;
    }
    let (ran, _) = EarlyStopping::replay(&record.epoch_losses, patience, record.epoch_budget);
    ran == record.epoch_losses.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(b: usize, n: usize, l: usize) -> Hyperparams {
        Hyperparams { batch_size: b, width: n, input_length: l }
    }

    fn record(h: Hyperparams, avg: Option<f64>) -> TrialRecord {
        TrialRecord {
            hyperparams: h,
            seed: 0,
            epoch_budget: 10,
            epoch_losses: vec![],
            stable_avg: avg,
            seconds: 0.0,
            status: TrialStatus::Completed,
        }
    }

    #[test]
    fn stable_average_hand_cases() {
        assert_eq!(stable_avg_loss(&[9.0, 9.0, 9.0, 9.0, 9.0, 2.0, 4.0], 7).unwrap(), 3.0);
        assert_eq!(stable_avg_loss(&[0.25; 12], 15).unwrap(), 0.25);
        assert!(matches!(stable_avg_loss(&[1.0; 5], 15), Err(Error::InsufficientEpochs(5))));
        assert!(stable_avg_loss(&[1.0; 8], 7).is_err());
    }

    #[test]
    fn select_best_argmin_and_ties() {
        let trials = vec![
            record(hp(32, 64, 1200), Some(0.5)),
            record(hp(64, 64, 1200), Some(0.3)),
            record(hp(128, 64, 1200), Some(0.4)),
        ];
        assert_eq!(select_best(&trials).unwrap(), hp(64, 64, 1200));

        let tie = vec![
            record(hp(32, 64, 3600), Some(0.2)),
            record(hp(32, 64, 1800), Some(0.2)),
            record(hp(32, 256, 1200), Some(0.2)),
            record(hp(32, 128, 1200), Some(0.2)),
        ];
        assert_eq!(select_best(&tie).unwrap(), hp(32, 128, 1200));

        let single = vec![record(hp(128, 256, 3600), Some(9.0))];
        assert_eq!(select_best(&single).unwrap(), hp(128, 256, 3600));

        assert!(matches!(select_best(&[record(hp(32, 64, 1200), None)]), Err(Error::Selection(_))));
    }

    #[test]
    fn paper_grid_has_27_points() {
        let grid = SearchSpace::paper().grid();
        assert_eq!(grid.len(), 27);
        let unique: std::collections::HashSet<_> = grid.iter().collect();
        assert_eq!(unique.len(), 27);
    }

    #[test]
    fn diverged_trials_have_no_average() {
        let r = TrialRecord::from_trace(hp(32, 64, 1200), 1, 10, vec![0.1; 8], TrialStatus::Diverged, 0.0);
        assert!(r.stable_avg.is_none());
        let r = TrialRecord::from_trace(hp(32, 64, 1200), 1, 10, vec![0.1; 4], TrialStatus::StoppedEarly, 0.0);
        assert!(!r.is_comparable());
    }

    #[test]
    fn stub_plateau_minimum_is_centre() {
        let space = SearchSpace::paper();
        let best = space
            .grid()
            .into_iter()
            .min_by(|a, b| stub_plateau(a).total_cmp(&stub_plateau(b)))
            .unwrap();
        assert_eq!(best, hp(64, 128, 1800));
    }
}
