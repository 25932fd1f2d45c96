use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear-interpolation quantile of an ascending slice.
///
/// Rank `h = (n - 1) * q / 100`; the result interpolates between the values
/// at `floor(h)` and `floor(h) + 1`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyInput("percentile"));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::Domain(format!("percentile {q} is outside [0, 100]")));
    }
    let h = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return Ok(sorted[sorted.len() - 1]);
    }
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, q)
}

/// Prediction-error statistics. Signed error is `prediction - target`.
///
/// All fields hold raw fractions; [`ErrorStats::report_row`] converts the
/// absolute and signed groups to percent for presentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub sq_mean: f64,
    pub sq_p90: f64,
    pub sq_p95: f64,
    pub sq_p99: f64,
    pub sq_max: f64,
    pub abs_mean: f64,
    /// Population standard deviation (divides by N).
    pub abs_std: f64,
    pub abs_p90: f64,
    pub abs_p95: f64,
    pub abs_p99: f64,
    pub abs_max: f64,
    pub err_min: f64,
    pub err_p5: f64,
    pub err_p95: f64,
    pub err_max: f64,
}

/// Column names, left to right, of the error table.
pub const TABLE2_COLUMNS: [&str; 15] = [
    "mu_e2", "e2_p90", "e2_p95", "e2_p99", "e2_max", "mu_abs_e", "sigma_abs_e", "abs_e_p90",
    "abs_e_p95", "abs_e_p99", "abs_e_max", "e_min", "e_p5", "e_p95", "e_max",
];

impl ErrorStats {
    /// Values in table units: squared-error group raw, the rest in percent.
    pub fn report_row(&self) -> [f64; 15] {
        let pct = |v: f64| v * 100.0;
        [
            self.sq_mean,
            self.sq_p90,
            self.sq_p95,
            self.sq_p99,
            self.sq_max,
            pct(self.abs_mean),
            pct(self.abs_std),
            pct(self.abs_p90),
            pct(self.abs_p95),
            pct(self.abs_p99),
            pct(self.abs_max),
            pct(self.err_min),
            pct(self.err_p5),
            pct(self.err_p95),
            pct(self.err_max),
        ]
    }

    /// Ordering invariants every valid result satisfies.
    pub fn is_consistent(&self) -> bool {
        self.sq_mean >= 0.0
            && self.sq_p90 <= self.sq_p95
            && self.sq_p95 <= self.sq_p99
            && self.sq_p99 <= self.sq_max
            && self.abs_mean >= 0.0
            && self.abs_std >= 0.0
            && self.abs_p90 >= 0.0
            && self.abs_p90 <= self.abs_p95
            && self.abs_p95 <= self.abs_p99
            && self.abs_p99 <= self.abs_max
            && self.err_min <= self.err_p5
            && self.err_p5 <= self.err_p95
            && self.err_p95 <= self.err_max
    }
}

pub fn compute_error_stats(predictions: &[f64], targets: &[f64]) -> Result<ErrorStats> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("compute_error_stats"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::Dimension {
            op: "compute_error_stats",
            expected: format!("{} targets", predictions.len()),
            found: format!("{} targets", targets.len()),
        });
    }
    let n = predictions.len() as f64;
    let mut signed: Vec<f64> = predictions.iter().zip(targets).map(|(&y, &t)| y - t).collect();
    let mut abs: Vec<f64> = signed.iter().map(|e| e.abs()).collect();
    let mut sq: Vec<f64> = signed.iter().map(|e| e * e).collect();

    let sq_mean = sq.iter().sum::<f64>() / n;
    let abs_mean = abs.iter().sum::<f64>() / n;
    let abs_var = abs.iter().map(|a| (a - abs_mean).powi(2)).sum::<f64>() / n;

    signed.sort_by(f64::total_cmp);
    abs.sort_by(f64::total_cmp);
    sq.sort_by(f64::total_cmp);
    let last = |v: &[f64]| v[v.len() - 1];

    Ok(ErrorStats {
        count: predictions.len(),
        sq_mean,
        sq_p90: percentile_sorted(&sq, 90.0)?,
        sq_p95: percentile_sorted(&sq, 95.0)?,
        sq_p99: percentile_sorted(&sq, 99.0)?,
        sq_max: last(&sq),
        abs_mean,
        abs_std: abs_var.sqrt(),
        abs_p90: percentile_sorted(&abs, 90.0)?,
        abs_p95: percentile_sorted(&abs, 95.0)?,
        abs_p99: percentile_sorted(&abs, 99.0)?,
        abs_max: last(&abs),
        err_min: signed[0],
        err_p5: percentile_sorted(&signed, 5.0)?,
        err_p95: percentile_sorted(&signed, 95.0)?,
        err_max: last(&signed),
    })
}
