use std::fs;

use fdrcast_core::channel::{self, GilbertElliottParams};
use fdrcast_core::checkpoint;
use fdrcast_core::data::{chronological_split, make_windows, SplitSpec};
use fdrcast_core::error::Error;
use fdrcast_core::hypertune::{
    run_search, select_best, stub_plateau, stub_trace, trace_consistent, FnRunner, SearchOptions, SearchSpace,
    TrainingRunner, TrialOutcome, TrialStatus,
};
use fdrcast_core::models::{self, Hyperparams, ModelKind};
use fdrcast_core::training::{train, validation_loss, TrainConfig};

fn small_config(batch_size: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epoch_budget: 6,
        initial_lr: 0.01,
        batch_size,
        early_stop_patience: 3,
        shuffle_seed: seed,
        train_stride: 2,
    }
}

fn splits(n: usize, seed: u64) -> fdrcast_core::data::Splits {
    let s = channel::simulate(&GilbertElliottParams::paper_like(seed), n).unwrap();
    chronological_split(&s, &SplitSpec::default()).unwrap()
}

#[test]
fn training_is_deterministic_and_restores_best_epoch() {
    let sp = splits(4000, 1);
    for kind in [ModelKind::Cnn, ModelKind::Lstm] {
        let hp = Hyperparams::new(8, 3, 16).unwrap();
        let tr = make_windows(&sp.train, 16, 16, 2).unwrap();
        let va = make_windows(&sp.validation, 16, 16, 1).unwrap();
        let run = || {
            let (m, _) = train(models::build(kind, hp, 5).unwrap(), &tr, &va, &small_config(8, 5)).unwrap();
            let mut bytes = Vec::new();
            checkpoint::save(&m, &mut bytes).unwrap();
            (m, bytes)
        };
        let (m1, b1) = run();
        let (_, b2) = run();
        assert_eq!(b1, b2, "{kind}: checkpoints differ between identical runs");

        let best = m1.val_loss_trace[m1.best_epoch - 1];
        assert_eq!(best, m1.val_loss_trace.iter().cloned().fold(f64::INFINITY, f64::min));
        assert_eq!(validation_loss(&m1, &va).unwrap(), best, "{kind}: best-epoch weights not restored");

        let reloaded = checkpoint::load(b1.as_slice()).unwrap();
        assert_eq!(reloaded.predict_dataset(&va).unwrap(), m1.predict_dataset(&va).unwrap());
    }
}

#[test]
fn different_seeds_give_different_models() {
    let sp = splits(3000, 2);
    let hp = Hyperparams::new(8, 2, 12).unwrap();
    let tr = make_windows(&sp.train, 12, 12, 2).unwrap();
    let va = make_windows(&sp.validation, 12, 12, 1).unwrap();
    let a = train(models::build(ModelKind::Lstm, hp, 1).unwrap(), &tr, &va, &small_config(8, 1)).unwrap().0;
    let b = train(models::build(ModelKind::Lstm, hp, 2).unwrap(), &tr, &va, &small_config(8, 2)).unwrap().0;
    assert_ne!(a.network.snapshot(), b.network.snapshot());
}

#[test]
fn window_length_mismatch_is_rejected() {
    let sp = splits(3000, 3);
    let tr = make_windows(&sp.train, 12, 12, 2).unwrap();
    let va = make_windows(&sp.validation, 12, 12, 1).unwrap();
    let model = models::build(ModelKind::Cnn, Hyperparams::new(8, 2, 16).unwrap(), 0).unwrap();
    assert!(matches!(train(model, &tr, &va, &small_config(8, 0)), Err(Error::Dimension { .. })));
}

fn stub_runner(epochs: usize) -> FnRunner<impl Fn(&Hyperparams, u64) -> fdrcast_core::Result<TrialOutcome> + Sync> {
    FnRunner {
        epoch_budget: epochs,
        f: move |hp: &Hyperparams, _| {
            Ok(TrialOutcome {
                epoch_losses: stub_trace(hp, epochs),
                status: TrialStatus::Completed,
            })
        },
    }
}

#[test]
fn stub_search_selects_hand_argmin() {
    let space = SearchSpace::paper();
    let result = run_search(&space, &stub_runner(10), &SearchOptions { master_seed: 0, workers: 2, store: None }).unwrap();
    assert_eq!(result.trials.len(), 27);
    // The plateau is zero at b = 64, n = 128, l = 1800, the only grid point
    // where every term vanishes.
    assert_eq!(result.best, Hyperparams::new(64, 128, 1800).unwrap());
    let argmin = space
        .grid()
        .into_iter()
        .min_by(|a, b| stub_plateau(a).total_cmp(&stub_plateau(b)))
        .unwrap();
    assert_eq!(result.best, argmin);
}

#[test]
fn search_resumes_only_missing_trials() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SearchOptions { master_seed: 9, workers: 1, store: Some(dir.path().to_path_buf()) };
    let space = SearchSpace::paper();
    let first = run_search(&space, &stub_runner(8), &opts).unwrap();
    assert_eq!(first.executed, 27);

    let trials = dir.path().join("trials");
    let mut removed = 0;
    for entry in fs::read_dir(&trials).unwrap().take(5) {
        fs::remove_file(entry.unwrap().path()).unwrap();
        removed += 1;
    }
    let second = run_search(&space, &stub_runner(8), &opts).unwrap();
    assert_eq!(second.executed, removed);
    assert_eq!(second.best, first.best);
    assert!(dir.path().join("summary.csv").exists());
    assert!(dir.path().join("best.json").exists());

    let third = run_search(&space, &stub_runner(8), &opts).unwrap();
    assert_eq!(third.executed, 0);
}

#[test]
fn all_diverged_search_fails() {
    let runner = FnRunner {
        epoch_budget: 8,
        f: |_: &Hyperparams, _| Ok(TrialOutcome { epoch_losses: vec![0.5], status: TrialStatus::Diverged }),
    };
    let space = SearchSpace { batch_sizes: vec![4], widths: vec![2, 3], lengths: vec![8] };
    let err = run_search(&space, &runner, &SearchOptions { master_seed: 0, workers: 1, store: None }).unwrap_err();
    assert!(matches!(err, Error::SearchFailure(msg) if msg.contains("diverged")));
}

#[test]
fn real_search_is_invariant_to_worker_count() {
    let sp = splits(3000, 4);
    let runner = TrainingRunner {
        kind: ModelKind::Lstm,
        train: sp.train,
        validation: sp.validation,
        horizon: 8,
        validation_stride: 1,
        template: TrainConfig { epoch_budget: 7, early_stop_patience: 7, ..small_config(4, 0) },
    };
    let space = SearchSpace { batch_sizes: vec![8, 16], widths: vec![2], lengths: vec![8, 12] };
    let run = |workers| run_search(&space, &runner, &SearchOptions { master_seed: 3, workers, store: None }).unwrap();
    let (one, four) = (run(1), run(4));
    assert_eq!(one.best, four.best);
    for (a, b) in one.trials.iter().zip(&four.trials) {
        assert_eq!(a.hyperparams, b.hyperparams);
        assert_eq!(a.epoch_losses, b.epoch_losses);
        assert_eq!(a.seed, b.seed);
        assert!(trace_consistent(a, 7));
    }
    assert_eq!(select_best(&one.trials).unwrap(), one.best);
}
