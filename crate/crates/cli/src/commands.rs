use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use fdrcast_core::channel::{self, GilbertElliottParams, PRNG_ALGORITHM};
use fdrcast_core::checkpoint;
use fdrcast_core::data::{load_outcomes, write_outcomes, OutcomeSeries, TraceFormat};
use fdrcast_core::dataset::{self, Dataset, PrepareConfig};
use fdrcast_core::digest::sha256_hex;
use fdrcast_core::eval::{self, compute_error_stats, ModelComplexity, ModelErrors};
use fdrcast_core::hypertune::{self, SearchOptions, SearchSpace, TrainingRunner, TrialOutcome, TrialStatus};
use fdrcast_core::models::{self, Hyperparams, ModelKind, Preset, TrainedModel};
use fdrcast_core::training::{self, TrainConfig, EPOCH_LOG_HEADER};
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{BenchArgs, EvaluateArgs, PrepareArgs, SimulateArgs, TrainArgs, TuneArgs};

/// A bad flag combination or value detected after parsing; exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn simulate(a: &SimulateArgs, out: &Path) -> Result<()> {
    let params = match &a.preset {
        Some(name) => GilbertElliottParams::preset(name, a.seed).map_err(|e| usage(e.to_string()))?,
        None => GilbertElliottParams {
            p_good_to_bad: a.p_gb.unwrap_or_default(),
            p_bad_to_good: a.p_bg.unwrap_or_default(),
            success_prob_good: a.s_good.unwrap_or_default(),
            success_prob_bad: a.s_bad.unwrap_or_default(),
            seed: a.seed,
        },
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    if a.samples == 0 {
        return Err(usage("-n must be at least 1"));
    }
    let stationary = params.stationary_fdr()?;
    let file = format!("trace.{}", a.format.extension());
    let manifest = RunManifest::new(
        "simulate",
        json!({
            "preset": a.preset,
            "channel": params,
            "samples": a.samples,
            "format": a.format,
            "prng": PRNG_ALGORITHM,
            "stationary_fdr": stationary,
            "trace_file": file,
        }),
    )?
    .seed("channel", a.seed);
    manifest.write(out)?;

    let series = channel::simulate(&params, a.samples)?;
    let mut bytes = Vec::new();
    write_outcomes(&series, &mut bytes, a.format)?;
    hypertune::write_atomic(&out.join(&file), &bytes)?;
    let empirical = series.outcomes().iter().map(|&b| b as f64).sum::<f64>() / series.len() as f64;
    manifest.finish(out)?;
    println!(
        "wrote {} samples to {} (empirical FDR {empirical:.4}, stationary {stationary:.4}, sha256 {})",
        series.len(),
        out.join(&file).display(),
        sha256_hex(&bytes)
    );
    Ok(())
}

fn read_trace(bytes: &[u8], path: &Path, sample_period: f64) -> Result<OutcomeSeries> {
    let series = load_outcomes(bytes, TraceFormat::from_path(path))
        .with_context(|| format!("cannot parse trace {}", path.display()))?;
    let label = path.display().to_string();
    Ok(OutcomeSeries::with_period(series.outcomes().to_vec(), sample_period, label)?)
}

fn preset_by_name(name: &str) -> Result<Preset> {
    Preset::by_name(name).map_err(|e| usage(e.to_string()))
}

pub fn prepare(a: &PrepareArgs, out: &Path) -> Result<()> {
    let preset = a.preset.as_deref().map(preset_by_name).transpose()?;
    let default = Preset::paper(ModelKind::Cnn);
    let config = PrepareConfig {
        input_length: a
            .input_length
            .or(preset.map(|p| p.hyperparams.input_length))
            .unwrap_or(default.hyperparams.input_length),
        horizon: a.horizon.or(preset.map(|p| p.horizon)).unwrap_or(default.horizon),
        train_stride: a.train_stride,
        eval_stride: a.eval_stride,
        split: a.split,
    };
    if config.input_length == 0 || config.horizon == 0 || config.train_stride == 0 || config.eval_stride == 0 {
        return Err(usage("input length, horizon and strides must be >= 1"));
    }
    if !(a.sample_period > 0.0) {
        return Err(usage("--sample-period must be > 0"));
    }
    let mut manifest = RunManifest::new(
        "prepare",
        json!({ "trace": a.trace, "preset": a.preset, "config": config, "sample_period_s": a.sample_period }),
    )?;
    let bytes = manifest.digest_input(&a.trace)?;
    manifest.write(out)?;

    let series = read_trace(&bytes, &a.trace, a.sample_period)?;
    let (ds, empty) = dataset::prepare(&series, &a.trace.display().to_string(), &sha256_hex(&bytes), &config, out)?;
    for name in &empty {
        eprintln!("warning: the {name} split holds no windows");
    }
    manifest.finish(out)?;
    println!(
        "l={} N_f={}: train {} samples / {} windows (stride {}), validation {} / {}, test {} / {} (stride {})",
        ds.input_length,
        ds.horizon,
        ds.train.length,
        ds.train.windows,
        ds.train_stride,
        ds.validation.length,
        ds.validation.windows,
        ds.test.length,
        ds.test.windows,
        ds.eval_stride
    );
    Ok(())
}

fn record_dataset_inputs(manifest: &mut RunManifest, ds: &Dataset) -> Result<()> {
    manifest.digest_input(&ds.dir.join(dataset::MANIFEST_FILE))?;
    for name in dataset::SPLIT_NAMES {
        if let Some(info) = ds.manifest.segment(name) {
            manifest
                .input_digests
                .insert(ds.dir.join(&info.file).display().to_string(), info.sha256.clone());
        }
    }
    Ok(())
}

pub fn train(a: &TrainArgs, out: &Path) -> Result<()> {
    let preset = match &a.preset {
        Some(name) => preset_by_name(name)?,
        None => Preset::paper(a.kind),
    };
    if preset.kind != a.kind {
        return Err(usage(format!("preset {} is for {}, not {}", preset.name, preset.kind, a.kind)));
    }
    let hp = Hyperparams::new(
        a.batch_size.unwrap_or(preset.hyperparams.batch_size),
        a.width.unwrap_or(preset.hyperparams.width),
        a.input_length.unwrap_or(preset.hyperparams.input_length),
    )
    .map_err(|e| usage(e.to_string()))?;
    let ds = Dataset::open(&a.data).with_context(|| format!("cannot open dataset {}", a.data.display()))?;
    if ds.manifest.input_length != hp.input_length {
        bail!(
            "dataset {} was prepared for input length {} but the model uses {}",
            a.data.display(),
            ds.manifest.input_length,
            hp.input_length
        );
    }
    let mut config = TrainConfig::for_preset(&preset, a.seed);
    config.batch_size = hp.batch_size;
    config.train_stride = ds.manifest.train_stride;
    if let Some(e) = a.epochs {
        config.epoch_budget = e;
    }
    if let Some(lr) = a.lr {
        config.initial_lr = lr;
    }
    if let Some(p) = a.patience {
        config.early_stop_patience = p;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;

    let mut manifest = RunManifest::new(
        "train",
        json!({
            "kind": a.kind,
            "preset": preset.name,
            "hyperparams": hp,
            "train_config": config,
            "horizon": ds.manifest.horizon,
            "data": a.data,
        }),
    )?
    .seed("model_init", a.seed)
    .seed("shuffle", a.seed);
    record_dataset_inputs(&mut manifest, &ds)?;
    manifest.write(out)?;

    let train_set = ds.windows("train", hp.input_length)?;
    let val_set = ds.windows("validation", hp.input_length)?;
    let model = models::build(a.kind, hp, a.seed)?;
    println!(
        "training {} {hp} ({} parameters) on {} windows, validating on {}",
        a.kind.label(),
        model.parameter_count(),
        train_set.len(),
        val_set.len()
    );

    let log_path = out.join("train_log.csv");
    let mut log = BufWriter::new(File::create(&log_path)?);
    writeln!(log, "{EPOCH_LOG_HEADER}")?;
    let mut log_err = None;
    let trained = training::train_with_observer(model, &train_set, &val_set, &config, |e| {
        println!(
            "epoch {:>3}  lr {:.6}  train_mse {:.6e}  val_mse {:.6e}  {:.1}s",
            e.epoch, e.lr, e.train_mse, e.val_mse, e.elapsed_s
        );
        if let Err(err) = writeln!(log, "{}", e.csv_row()).and_then(|_| log.flush()) {
            log_err.get_or_insert(err);
        }
    });
    if let Some(err) = log_err {
        return Err(err).context("cannot write training log");
    }
    let (model, report) = trained?;

    let ckpt_path = out.join("checkpoint.bin");
    let mut bytes = Vec::new();
    checkpoint::save(&model, &mut bytes)?;
    hypertune::write_atomic(&ckpt_path, &bytes)?;
    let summary = json!({
        "kind": model.kind,
        "hyperparams": model.hyperparams,
        "parameter_count": model.parameter_count(),
        "epochs_run": report.epochs.len(),
        "stopped_early": report.stopped_early,
        "best_epoch": model.best_epoch,
        "best_val_mse": model.val_loss_trace.get(model.best_epoch.saturating_sub(1)),
        "val_loss_trace": model.val_loss_trace,
        "checkpoint_sha256": sha256_hex(&bytes),
    });
    hypertune::write_atomic(&out.join("training.json"), (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    manifest.finish(out)?;
    println!(
        "best epoch {} of {}; checkpoint {} (sha256 {})",
        model.best_epoch,
        report.epochs.len(),
        ckpt_path.display(),
        sha256_hex(&bytes)
    );
    Ok(())
}

pub fn tune(a: &TuneArgs, out: &Path) -> Result<()> {
    let paper = SearchSpace::paper();
    let space = SearchSpace {
        batch_sizes: a.batch_sizes.clone().unwrap_or(paper.batch_sizes),
        widths: a.widths.clone().unwrap_or(paper.widths),
        lengths: a.lengths.clone().unwrap_or(paper.lengths),
    };
    space.validate().map_err(|e| usage(e.to_string()))?;
    if space.grid().iter().any(|hp| hp.validate().is_err()) {
        return Err(usage("search space values must all be >= 1"));
    }
    if a.workers == 0 {
        return Err(usage("--workers must be >= 1"));
    }
    let preset = Preset::paper(a.kind);
    let epochs = a.epochs.unwrap_or(preset.epochs);
    if epochs <= hypertune::UNSTABLE_EPOCHS {
        return Err(usage(format!(
            "--epochs must exceed {} so the stable average has data",
            hypertune::UNSTABLE_EPOCHS
        )));
    }

    let mut manifest = RunManifest::new(
        "tune",
        json!({
            "kind": a.kind,
            "space": space,
            "epochs": epochs,
            "lr": a.lr,
            "patience": a.patience,
            "workers": a.workers,
            "stub_losses": a.stub_losses,
            "data": a.data,
        }),
    )?
    .seed("master", a.seed);

    let options = SearchOptions {
        master_seed: a.seed,
        workers: a.workers,
        store: Some(out.to_path_buf()),
    };
    let result = if a.stub_losses {
        manifest.write(out)?;
        let runner = hypertune::FnRunner {
            epoch_budget: epochs,
            f: |hp: &Hyperparams, _seed: u64| {
                Ok(TrialOutcome {
                    epoch_losses: hypertune::stub_trace(hp, epochs),
                    status: TrialStatus::Completed,
                })
            },
        };
        hypertune::run_search(&space, &runner, &options)?
    } else {
        let data = a.data.as_ref().ok_or_else(|| usage("--data is required"))?;
        let ds = Dataset::open(data).with_context(|| format!("cannot open dataset {}", data.display()))?;
        record_dataset_inputs(&mut manifest, &ds)?;
        manifest.write(out)?;
        let template = TrainConfig {
            epoch_budget: epochs,
            initial_lr: a.lr,
            batch_size: preset.hyperparams.batch_size,
            early_stop_patience: a.patience,
            shuffle_seed: a.seed,
            train_stride: ds.manifest.train_stride,
        };
        template.validate().map_err(|e| usage(e.to_string()))?;
        let runner = TrainingRunner {
            kind: a.kind,
            train: ds.require_segment("train")?,
            validation: ds.require_segment("validation")?,
            horizon: ds.manifest.horizon,
            validation_stride: ds.manifest.eval_stride,
            template,
        };
        hypertune::run_search(&space, &runner, &options)?
    };
    manifest.finish(out)?;

    let resumed = result.trials.len() - result.executed;
    println!(
        "{} trials ({} run, {resumed} resumed); best {} -> {}",
        result.trials.len(),
        result.executed,
        result.best,
        out.join("best.json").display()
    );
    Ok(())
}

fn load_checkpoint(manifest: &mut RunManifest, path: &Path) -> Result<TrainedModel> {
    let bytes = manifest.digest_input(path)?;
    checkpoint::load(bytes.as_slice()).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

/// Label for the last of `kinds`, suffixed with a counter when that kind
/// appeared earlier.
fn kind_label(kinds: &[ModelKind]) -> String {
    let last = kinds[kinds.len() - 1];
    let n = kinds.iter().filter(|&&k| k == last).count();
    if n == 1 {
        last.label().to_string()
    } else {
        format!("{}-{n}", last.label())
    }
}

pub fn evaluate(a: &EvaluateArgs, out: &Path) -> Result<()> {
    let ds = Dataset::open(&a.data).with_context(|| format!("cannot open dataset {}", a.data.display()))?;
    let mut manifest = RunManifest::new("evaluate", json!({ "checkpoints": a.checkpoints, "data": a.data }))?;
    record_dataset_inputs(&mut manifest, &ds)?;
    let models: Vec<TrainedModel> = a
        .checkpoints
        .iter()
        .map(|p| load_checkpoint(&mut manifest, p))
        .collect::<Result<_>>()?;
    manifest.write(out)?;

    let mut rows = Vec::new();
    for (k, model) in models.iter().enumerate() {
        let kinds: Vec<ModelKind> = models[..=k].iter().map(|m| m.kind).collect();
        let label = kind_label(&kinds);
        let test = ds
            .windows("test", model.hyperparams.input_length)
            .with_context(|| format!("{label}: cannot window the test split"))?;
        let predictions = model.predict_dataset(&test)?;
        let stats = compute_error_stats(&predictions, test.targets())?;
        let mut csv = String::from("anchor,target,prediction\n");
        for ((anchor, t), y) in test.anchors().iter().zip(test.targets()).zip(&predictions) {
            csv.push_str(&format!("{anchor},{t},{y}\n"));
        }
        fs::write(out.join(format!("predictions_{}.csv", label.to_lowercase())), csv)?;
        println!(
            "{label}: {} test windows, mean e^2 {:.4e}, mean |e| {:.3}%",
            stats.count,
            stats.sq_mean,
            stats.abs_mean * 100.0
        );
        rows.push(ModelErrors { model: label, stats });
    }
    eval::report::write_reports(out, &rows, &[])?;
    manifest.finish(out)?;
    println!("report written to {}", out.display());
    Ok(())
}

fn bench_patterns(a: &BenchArgs, ds: Option<&Dataset>, input_length: usize) -> Result<Vec<Vec<u8>>> {
    let count = a.patterns.max(1);
    match ds {
        Some(ds) => {
            let test = ds.windows("test", input_length)?;
            Ok(test.patterns().take(count).map(<[u8]>::to_vec).collect())
        }
        None => {
            let series = channel::simulate(&GilbertElliottParams::paper_like(a.seed), input_length + count - 1)?;
            Ok(series.outcomes().windows(input_length).map(<[u8]>::to_vec).collect())
        }
    }
}

pub fn bench(a: &BenchArgs, out: &Path) -> Result<()> {
    if a.reps < eval::MIN_REPETITIONS {
        return Err(usage(format!("--reps must be at least {}, got {}", eval::MIN_REPETITIONS, a.reps)));
    }
    let mut manifest = RunManifest::new(
        "bench",
        json!({
            "checkpoints": a.checkpoints,
            "reps": a.reps,
            "warmup": eval::WARMUP_PREDICTIONS,
            "patterns": a.patterns,
            "data": a.data,
        }),
    )?
    .seed("patterns", a.seed);
    let ds = a.data.as_deref().map(Dataset::open).transpose()?;
    if let Some(ds) = &ds {
        record_dataset_inputs(&mut manifest, ds)?;
    }
    for p in &a.checkpoints {
        manifest.digest_input(p)?;
    }
    manifest.write(out)?;

    let mut rows = Vec::new();
    let mut loaded = Vec::new();
    // Models are loaded one at a time so only the timed model's weights are
    // resident while it runs.
    for path in &a.checkpoints {
        let model = checkpoint::load_path(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
        loaded.push(model.kind);
        let label = kind_label(&loaded);
        let patterns = bench_patterns(a, ds.as_ref(), model.hyperparams.input_length)?;
        let refs: Vec<&[u8]> = patterns.iter().map(Vec::as_slice).collect();
        let complexity = eval::bench_inference(&model, &refs, a.reps)?;
        drop(model);
        println!(
            "{label}: {:.4} ms per inference, footprint {:.3} MB, peak {:.3} MB ({})",
            complexity.mean_response_time_ms,
            complexity.memory_footprint_mb,
            complexity.memory_peak_mb,
            complexity.memory_method
        );
        rows.push(ModelComplexity { model: label, complexity });
    }
    eval::report::write_reports(out, &[], &rows)?;
    manifest.finish(out)?;
    println!("report written to {}", out.display());
    Ok(())
}
