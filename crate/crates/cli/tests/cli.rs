use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fdrcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdrcast"))
        .args(args)
        .env_remove("FDRCAST_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fdrcast(args);
    assert!(
        out.status.success(),
        "fdrcast {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulated trace plus a toy-scale dataset directory.
fn toy_dataset(root: &Path, samples: &str) {
    let trace = root.join("trace");
    ok(&["simulate", "--preset", "paper-like", "-n", samples, "--seed", "7", "-o", p(&trace)]);
    ok(&[
        "prepare",
        "--trace",
        p(&trace.join("trace.bits")),
        "--preset",
        "toy-cnn",
        "--input-length",
        "16",
        "--horizon",
        "16",
        "-o",
        p(&root.join("ds")),
    ]);
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(fdrcast(&["simulate", "--preset", "paper-like"]).status.code(), Some(2));
    assert_eq!(fdrcast(&["simulate", "-n", "10", "--p-gb", "1.5", "--p-bg", "0.1", "--s-good", "0.9", "--s-bad", "0.1"]).status.code(), Some(2));
    assert_eq!(fdrcast(&["simulate", "-n", "10", "--preset", "no-such-preset"]).status.code(), Some(2));
    assert_eq!(fdrcast(&["bench", "--checkpoint", "missing.bin", "--reps", "99"]).status.code(), Some(2));
    assert_eq!(fdrcast(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_and_calibrated() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["simulate", "--preset", "paper-like", "-n", "1000000", "--seed", "7", "-o", p(d)]);
    }
    let ta = fs::read(a.join("trace.bits")).unwrap();
    assert_eq!(ta, fs::read(b.join("trace.bits")).unwrap());
    let ones = ta.iter().filter(|&&c| c == b'1').count() as f64;
    assert!((ones / 1e6 - 0.884).abs() < 0.005);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"]["channel"], 7);
    assert!(manifest["finished_unix_s"].is_number());
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fdrcast"))
        .args(["simulate", "--preset", "paper-like", "-n", "100"])
        .env("FDRCAST_OUTPUT_ROOT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("simulate").join("trace.bits").exists());
}

#[test]
fn prepare_counts_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    toy_dataset(dir.path(), "5000");
    let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("ds/dataset.json")).unwrap()).unwrap();
    // 5000 samples split at 2500 / 3333: windows = ceil((len - 16 - 16 + 1) / stride).
    assert_eq!(m["train"]["length"], 2500);
    assert_eq!(m["train"]["windows"], (2500 - 31usize).div_ceil(10));
    assert_eq!(m["validation"]["windows"], 833 - 31);
    assert_eq!(m["test"]["windows"], 1667 - 31);

    let trace = dir.path().join("trace/trace.bits");
    let only_train = fdrcast(&["prepare", "--trace", p(&trace), "--input-length", "16", "--horizon", "16", "--split", "1,0,0", "-o", p(&dir.path().join("t"))]);
    assert!(only_train.status.success());
    assert!(String::from_utf8_lossy(&only_train.stderr).contains("warning: the validation split holds no windows"));

    let too_long = fdrcast(&["prepare", "--trace", p(&trace), "--input-length", "16", "--horizon", "6000", "-o", p(&dir.path().join("x"))]);
    assert_eq!(too_long.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&too_long.stderr).contains("need at least 6016"));
}

#[test]
fn train_twice_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    toy_dataset(dir.path(), "6000");
    let ds = dir.path().join("ds");
    for kind in ["cnn", "lstm"] {
        let preset = format!("toy-{kind}");
        let mut digests = Vec::new();
        for run in ["r1", "r2"] {
            let out = dir.path().join(format!("{kind}-{run}"));
            ok(&["train", kind, "--preset", &preset, "--input-length", "16", "--epochs", "2", "--seed", "11", "--data", p(&ds), "-o", p(&out)]);
            digests.push(fs::read(out.join("checkpoint.bin")).unwrap());
            let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
            assert!(log.starts_with("epoch,lr,train_mse,val_mse,elapsed_s\n"));
            assert_eq!(log.lines().count(), 3);
        }
        assert_eq!(digests[0], digests[1], "{kind} checkpoints differ");
    }

    // Evaluate both, then benchmark both.
    let eval_dir = dir.path().join("eval");
    ok(&["evaluate", "--checkpoint", p(&dir.path().join("cnn-r1/checkpoint.bin")), "--checkpoint", p(&dir.path().join("lstm-r1/checkpoint.bin")), "--data", p(&ds), "-o", p(&eval_dir)]);
    let table2 = fs::read_to_string(eval_dir.join("table2.csv")).unwrap();
    assert_eq!(table2.lines().count(), 3);
    assert!(table2.lines().nth(1).unwrap().starts_with("CNN,"));
    let bench_dir = dir.path().join("bench");
    ok(&["bench", "--checkpoint", p(&dir.path().join("lstm-r1/checkpoint.bin")), "--data", p(&ds), "-o", p(&bench_dir)]);
    let table3 = fs::read_to_string(bench_dir.join("table3.csv")).unwrap();
    assert!(table3.starts_with("model,mean_response_time_ms,memory_footprint_mb,memory_peak_mb\nLSTM,"));
}

#[test]
fn train_rejects_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    toy_dataset(dir.path(), "3000");
    let out = fdrcast(&["train", "cnn", "--preset", "toy-cnn", "--data", p(&dir.path().join("ds")), "-o", p(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("input length 16"));
}

fn stub_tune(out: &Path, workers: &str) -> String {
    let o = ok(&["tune", "cnn", "--stub-losses", "--epochs", "8", "--workers", workers, "--seed", "5", "-o", p(out)]);
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn tune_stub_is_resumable_and_worker_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let (one, four) = (dir.path().join("w1"), dir.path().join("w4"));
    assert!(stub_tune(&one, "1").contains("27 trials (27 run, 0 resumed)"));
    stub_tune(&four, "4");
    let best = fs::read_to_string(one.join("best.json")).unwrap();
    assert_eq!(best, fs::read_to_string(four.join("best.json")).unwrap());
    let parsed: serde_json::Value = serde_json::from_str(&best).unwrap();
    assert_eq!(parsed, serde_json::json!({ "batch_size": 64, "width": 128, "input_length": 1800 }));

    for name in ["trial_l1200_n64_b32.json", "trial_l3600_n256_b128.json", "trial_l1800_n128_b64.json"] {
        fs::remove_file(one.join("trials").join(name)).unwrap();
    }
    assert!(stub_tune(&one, "1").contains("27 trials (3 run, 24 resumed)"));
    assert_eq!(fs::read_to_string(one.join("summary.csv")).unwrap().lines().count(), 28);
}
