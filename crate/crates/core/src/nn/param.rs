use rand::Rng;

use super::matrix::RealMatrix;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// A trainable array together with its gradient and Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub value: RealMatrix,
    pub grad: RealMatrix,
    adam_m: RealMatrix,
    adam_v: RealMatrix,
    step_count: u64,
}

impl ParamTensor {
    pub fn new(value: RealMatrix) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: RealMatrix::zeros(r, c),
            adam_m: RealMatrix::zeros(r, c),
            adam_v: RealMatrix::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(RealMatrix::zeros(rows, cols))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn adam_moments(&self) -> (&RealMatrix, &RealMatrix) {
        (&self.adam_m, &self.adam_v)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// One Adam update with bias correction. The gradient is left untouched.
    pub fn adam_step(&mut self, learning_rate: f64) -> Result<()> {
        if let Some(pos) = self.grad.values().iter().position(|g| !g.is_finite()) {
            return Err(Error::NumericOverflow(format!(
                "non-finite gradient at flat index {pos}"
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - ADAM_BETA1.powi(t);
        let bias2 = 1.0 - ADAM_BETA2.powi(t);
        let values = self.value.values_mut();
        let m = self.adam_m.values_mut();
        let v = self.adam_v.values_mut();
        for (((p, &g), m), v) in values
            .iter_mut()
            .zip(self.grad.values())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
        Ok(())
    }
}

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform with standard deviation `sqrt(2 / fan_in)`, for ReLU layers.
    HeUniform,
    /// Uniform with limit `sqrt(6 / (fan_in + fan_out))`, for tanh and LSTM.
    GlorotUniform,
    Zeros,
}

impl Init {
    pub fn sample<R: Rng + ?Sized>(
        self,
        rng: &mut R,
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
    ) -> RealMatrix {
        let limit = match self {
            Init::HeUniform => (6.0 / fan_in.max(1) as f64).sqrt(),
            Init::GlorotUniform => (6.0 / (fan_in + fan_out).max(1) as f64).sqrt(),
            Init::Zeros => return RealMatrix::zeros(rows, cols),
        };
        let values = (0..rows * cols)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        RealMatrix::from_raw(rows, cols, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> ParamTensor {
        ParamTensor::new(RealMatrix::from_vec(1, 1, vec![v]).unwrap())
    }

    #[test]
    fn zero_grad_leaves_params_but_counts_step() {
        let mut p = scalar(0.3);
        p.adam_step(0.01).unwrap();
        assert_eq!(p.value.values(), &[0.3]);
        assert_eq!(p.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t=1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut p = scalar(0.0);
        p.grad.set(0, 0, 1.0);
        p.adam_step(0.01).unwrap();
        let expected = -0.01 * 1.0 / (1.0 + 1e-8);
        assert!((p.value.get(0, 0) - expected).abs() < 1e-15);
        assert!((p.value.get(0, 0) + 0.01).abs() < 1e-6);
        assert_eq!(p.grad.get(0, 0), 1.0);
    }

    #[test]
    fn constant_gradient_is_monotone() {
        let mut p = scalar(1.0);
        p.grad.set(0, 0, -2.5);
        let mut last = p.value.get(0, 0);
        for _ in 0..2 {
            p.adam_step(0.01).unwrap();
            let now = p.value.get(0, 0);
            assert!(now > last);
            last = now;
        }
        // With a constant gradient both corrected moments equal g and g^2, so
        // each step is lr * |g| / (|g| + eps).
        let per_step = 0.01 * 2.5 / (2.5 + 1e-8);
        assert!((last - (1.0 + 2.0 * per_step)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = scalar(1.0);
        p.grad.values_mut()[0] = f64::NAN;
        assert!(matches!(p.adam_step(0.01), Err(Error::NumericOverflow(_))));
        assert_eq!(p.step_count(), 0);
    }

    #[test]
    fn moments_start_at_zero() {
        let p = ParamTensor::zeros(3, 2);
        let (m, v) = p.adam_moments();
        assert!(m.values().iter().chain(v.values()).all(|&x| x == 0.0));
    }

    #[test]
    fn he_uniform_has_expected_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Init::HeUniform.sample(&mut rng, 200, 50, 200, 50);
        let n = m.len() as f64;
        let var = m.values().iter().map(|v| v * v).sum::<f64>() / n;
        assert!((var - 2.0 / 200.0).abs() < 0.1 * 2.0 / 200.0);
    }
}
