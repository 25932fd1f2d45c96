//! Shared helpers for the acceptance suite: finite-difference gradient checks,
//! baselines and result lines.

use std::fmt;
use std::time::Instant;

use fdrcast_core::nn::{mse_loss, Init, Layer, LayerSpec, RealMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// Relative error with a small floor on the scale so that two near-zero
/// gradients do not register as a mismatch.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-7);
    (analytic - numeric).abs() / scale
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RealMatrix {
    let v = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    RealMatrix::from_vec(rows, cols, v).unwrap()
}

/// Entries with magnitude in `[gap, 1)` so no ReLU kink sits inside the step.
pub fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gap: f64) -> RealMatrix {
    let v = (0..rows * cols)
        .map(|_| {
            let m = rng.gen_range(gap..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    RealMatrix::from_vec(rows, cols, v).unwrap()
}

/// Distinct, well-separated values so max-pool argmaxes never flip.
pub fn shuffled_ramp(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RealMatrix {
    let mut v: Vec<f64> = (0..rows * cols).map(|k| k as f64 * 0.01).collect();
    for k in (1..v.len()).rev() {
        v.swap(k, rng.gen_range(0..=k));
    }
    RealMatrix::from_vec(rows, cols, v).unwrap()
}

fn projection(layer: &Layer, input: &RealMatrix, w: &RealMatrix) -> f64 {
    let out = layer.infer(input).unwrap();
    out.values().iter().zip(w.values()).map(|(a, b)| a * b).sum()
}

/// Worst relative error of a layer's input and parameter gradients for the
/// objective `sum(w * layer(x))` with a random projection `w`.
pub fn layer_gradient_error(spec: LayerSpec, input: RealMatrix, rng: &mut ChaCha8Rng) -> f64 {
    let mut layer = Layer::build(spec, Init::GlorotUniform, rng).unwrap();
    let out = layer.forward(&input).unwrap();
    let w = random_matrix(rng, out.rows(), out.cols());
    let grad_in = layer.backward(&w).unwrap();
    let param_grads: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.values().to_vec()).collect();

    let mut worst: f64 = 0.0;
    let mut x = input.clone();
    for k in 0..x.len() {
        let orig = x.values()[k];
        x.values_mut()[k] = orig + FD_STEP;
        let up = projection(&layer, &x, &w);
        x.values_mut()[k] = orig - FD_STEP;
        let down = projection(&layer, &x, &w);
        x.values_mut()[k] = orig;
        worst = worst.max(rel_err(grad_in.values()[k], (up - down) / (2.0 * FD_STEP)));
    }
    for (p, analytic) in param_grads.iter().enumerate() {
        for (k, &g) in analytic.iter().enumerate() {
            let orig = layer.params()[p].value.values()[k];
            layer.params_mut()[p].value.values_mut()[k] = orig + FD_STEP;
            let up = projection(&layer, &input, &w);
            layer.params_mut()[p].value.values_mut()[k] = orig - FD_STEP;
            let down = projection(&layer, &input, &w);
            layer.params_mut()[p].value.values_mut()[k] = orig;
            worst = worst.max(rel_err(g, (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Worst relative error of the MSE gradient with respect to the predictions.
pub fn mse_gradient_error(rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.gen_range(1..9);
    let mut preds: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
    let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let (_, grad) = mse_loss(&preds, &targets).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let orig = preds[k];
        preds[k] = orig + FD_STEP;
        let up = mse_loss(&preds, &targets).unwrap().0;
        preds[k] = orig - FD_STEP;
        let down = mse_loss(&preds, &targets).unwrap().0;
        preds[k] = orig;
        worst = worst.max(rel_err(grad[k], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> f64 {
    predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / targets.len() as f64
}

/// Population variance: the MSE of the best constant predictor.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {} ({:.1} s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

/// Runs `check`, which returns `(passed, detail)`, and times it. A panic
/// inside the check counts as a failure.
pub fn judge(id: u8, title: &'static str, check: impl FnOnce() -> (bool, String) + std::panic::UnwindSafe) -> Verdict {
    let start = Instant::now();
    let (passed, detail) = match std::panic::catch_unwind(check) {
        Ok(r) => r,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (false, format!("panicked: {msg}"))
        }
    };
    Verdict { id, title, passed, detail, seconds: start.elapsed().as_secs_f64() }
}
