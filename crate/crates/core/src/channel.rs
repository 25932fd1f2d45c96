//! Two-state Gilbert-Elliott channel for synthetic outcome traces.
//!
//! Each step first emits an outcome with the current state's success
//! probability, then transitions. The chain starts from its stationary
//! distribution, so every prefix has the stationary delivery ratio in
//! expectation.
//!
//! Random numbers come from ChaCha8 seeded through `seed_from_u64`; a trace
//! is reproducible from `(params, seed, n)` on any platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::OutcomeSeries;
use crate::error::{Error, Result};

/// Name recorded in manifests for the generator behind [`simulate`].
pub const PRNG_ALGORITHM: &str = "chacha8 (rand_chacha 0.3, seed_from_u64)";

pub const PAPER_LIKE_PRESET: &str = "paper-like";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GilbertElliottParams {
    pub p_good_to_bad: f64,
    pub p_bad_to_good: f64,
    pub success_prob_good: f64,
    pub success_prob_bad: f64,
    pub seed: u64,
}

impl GilbertElliottParams {
    /// Stationary delivery ratio 0.9 * 0.97 + 0.1 * 0.11 = 0.884, with bad
    /// bursts lasting about 11 probes on average.
    pub fn paper_like(seed: u64) -> Self {
        Self {
            p_good_to_bad: 0.01,
            p_bad_to_good: 0.09,
            success_prob_good: 0.97,
            success_prob_bad: 0.11,
            seed,
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            PAPER_LIKE_PRESET => Ok(Self::paper_like(seed)),
            other => Err(Error::InvalidParameter(format!(
                "unknown channel preset {other:?} (available: {PAPER_LIKE_PRESET})"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_good_to_bad", self.p_good_to_bad),
            ("p_bad_to_good", self.p_bad_to_good),
            ("success_prob_good", self.success_prob_good),
            ("success_prob_bad", self.success_prob_bad),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        if self.p_good_to_bad + self.p_bad_to_good <= 0.0 {
            return Err(Error::InvalidParameter(
                "reducible chain: p_good_to_bad + p_bad_to_good must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Stationary probability of the good state.
    pub fn stationary_good(&self) -> Result<f64> {
        self.validate()?;
        Ok(self.p_bad_to_good / (self.p_good_to_bad + self.p_bad_to_good))
    }

    /// Long-run fraction of delivered frames.
    pub fn stationary_fdr(&self) -> Result<f64> {
        let pi_good = self.stationary_good()?;
        Ok(pi_good * self.success_prob_good + (1.0 - pi_good) * self.success_prob_bad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelState {
    Good,
    Bad,
}

/// Outcomes plus the hidden state at each step.
pub fn simulate_with_states(
    params: &GilbertElliottParams,
    n: usize,
) -> Result<(OutcomeSeries, Vec<ChannelState>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("trace length must be >= 1".into()));
    }
    let pi_good = params.stationary_good()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut state = if rng.gen::<f64>() < pi_good {
        ChannelState::Good
    } else {
        ChannelState::Bad
    };
    let mut outcomes = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        let (success, leave) = match state {
            ChannelState::Good => (params.success_prob_good, params.p_good_to_bad),
            ChannelState::Bad => (params.success_prob_bad, params.p_bad_to_good),
        };
        outcomes.push((rng.gen::<f64>() < success) as u8);
        states.push(state);
        if rng.gen::<f64>() < leave {
            state = match state {
                ChannelState::Good => ChannelState::Bad,
                ChannelState::Bad => ChannelState::Good,
            };
        }
    }
    let label = format!(
        "gilbert-elliott(p_gb={}, p_bg={}, s_g={}, s_b={}, seed={})",
        params.p_good_to_bad,
        params.p_bad_to_good,
        params.success_prob_good,
        params.success_prob_bad,
        params.seed
    );
    Ok((OutcomeSeries::new(outcomes, label)?, states))
}

pub fn simulate(params: &GilbertElliottParams, n: usize) -> Result<OutcomeSeries> {
    simulate_with_states(params, n).map(|(s, _)| s)
}

/// Stationary Bernoulli trace: every outcome is 1 with probability `p`.
pub fn bernoulli(p: f64, n: usize, seed: u64) -> Result<OutcomeSeries> {
    let params = GilbertElliottParams {
        p_good_to_bad: 0.5,
        p_bad_to_good: 0.5,
        success_prob_good: p,
        success_prob_bad: p,
        seed,
    };
    simulate(&params, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_hand_cases() {
        let p = GilbertElliottParams {
            p_good_to_bad: 0.3,
            p_bad_to_good: 0.05,
            success_prob_good: 0.7,
            success_prob_bad: 0.7,
            seed: 0,
        };
        assert!((p.stationary_fdr().unwrap() - 0.7).abs() < 1e-15);

        let p = GilbertElliottParams {
            p_good_to_bad: 0.2,
            p_bad_to_good: 0.2,
            success_prob_good: 0.9,
            success_prob_bad: 0.3,
            seed: 0,
        };
        assert!((p.stationary_fdr().unwrap() - 0.6).abs() < 1e-15);

        let fdr = GilbertElliottParams::paper_like(0).stationary_fdr().unwrap();
        assert!((fdr - (0.9 * 0.97 + 0.1 * 0.11)).abs() < 1e-15);
        assert!((fdr - 0.884).abs() < 1e-12);
    }

    #[test]
    fn reducible_chain_rejected() {
        let mut p = GilbertElliottParams::paper_like(0);
        p.p_good_to_bad = 0.0;
        p.p_bad_to_good = 0.0;
        assert!(matches!(p.stationary_fdr(), Err(Error::InvalidParameter(_))));
        p.p_bad_to_good = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn perfect_channel_all_ones() {
        let mut p = GilbertElliottParams::paper_like(3);
        p.success_prob_good = 1.0;
        p.success_prob_bad = 1.0;
        let s = simulate(&p, 1000).unwrap();
        assert!(s.outcomes().iter().all(|&b| b == 1));
    }

    #[test]
    fn deterministic_from_seed() {
        let p = GilbertElliottParams::paper_like(42);
        assert_eq!(simulate(&p, 5000).unwrap(), simulate(&p, 5000).unwrap());
        let q = GilbertElliottParams::paper_like(43);
        assert_ne!(simulate(&p, 5000).unwrap(), simulate(&q, 5000).unwrap());
    }

    #[test]
    fn unknown_preset() {
        assert!(GilbertElliottParams::preset("nope", 0).is_err());
        assert_eq!(
            GilbertElliottParams::preset(PAPER_LIKE_PRESET, 9).unwrap(),
            GilbertElliottParams::paper_like(9)
        );
    }
}
