use fdrcast_core::eval::{compute_error_stats, ErrorStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closest-ranks interpolation written out longhand over a sorted copy.
fn oracle_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = q / 100.0 * (v.len() as f64 - 1.0);
    let below = rank.floor();
    let idx = below as usize;
    if idx + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[idx] * (1.0 - (rank - below)) + v[idx + 1] * (rank - below)
}

fn oracle(predictions: &[f64], targets: &[f64]) -> [f64; 15] {
    let n = predictions.len() as f64;
    let e: Vec<f64> = predictions.iter().zip(targets).map(|(p, t)| p - t).collect();
    let a: Vec<f64> = e.iter().map(|x| x.abs()).collect();
    let s: Vec<f64> = e.iter().map(|x| x * x).collect();
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean_a = a.iter().sum::<f64>() / n;
    let sd_a = (a.iter().map(|x| (x - mean_a) * (x - mean_a)).sum::<f64>() / n).sqrt();
    [
        s.iter().sum::<f64>() / n,
        oracle_quantile(&s, 90.0),
        oracle_quantile(&s, 95.0),
        oracle_quantile(&s, 99.0),
        max(&s),
        mean_a,
        sd_a,
        oracle_quantile(&a, 90.0),
        oracle_quantile(&a, 95.0),
        oracle_quantile(&a, 99.0),
        max(&a),
        min(&e),
        oracle_quantile(&e, 5.0),
        oracle_quantile(&e, 95.0),
        max(&e),
    ]
}

fn raw(s: &ErrorStats) -> [f64; 15] {
    [
        s.sq_mean, s.sq_p90, s.sq_p95, s.sq_p99, s.sq_max, s.abs_mean, s.abs_std, s.abs_p90, s.abs_p95, s.abs_p99,
        s.abs_max, s.err_min, s.err_p5, s.err_p95, s.err_max,
    ]
}

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.gen_range(1..=1000);
    let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let p: Vec<f64> = t.iter().map(|x| x + rng.gen_range(-0.4..0.3)).collect();
    (p, t)
}

#[test]
fn matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..500 {
        let (p, t) = random_case(&mut rng);
        let got = raw(&compute_error_stats(&p, &t).unwrap());
        let want = oracle(&p, &t);
        for (k, (g, w)) in got.iter().zip(&want).enumerate() {
            assert!((g - w).abs() <= 1e-12, "case {case}, field {k}: {g} vs {w}");
        }
    }
}

#[test]
fn unit_identities_and_ordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let (p, t) = random_case(&mut rng);
        let s = compute_error_stats(&p, &t).unwrap();
        assert!(s.is_consistent());
        assert_eq!(s.sq_max, s.abs_max * s.abs_max);
        // Raw mean of e^2 against the mean of squared percent errors.
        let row = s.report_row();
        let pct_sq_mean = p.iter().zip(&t).map(|(a, b)| ((a - b).abs() * 100.0).powi(2)).sum::<f64>() / p.len() as f64;
        let lhs = row[0] * 1e4;
        assert!((lhs - pct_sq_mean).abs() <= 1e-9 * pct_sq_mean.abs().max(1e-300));
    }
}
