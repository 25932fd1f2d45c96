//! Stateless forward kernels. The layer types in [`super::layers`] wrap these
//! and add caching plus backward passes.

use super::matrix::{axpy, RealMatrix};
use crate::error::{Error, Result};

/// Logistic sigmoid, split on sign so `exp` never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `input [batch x d_in] · weights [d_in x d_out] + bias [1 x d_out]`.
pub fn dense_forward(
    input: &RealMatrix,
    weights: &RealMatrix,
    bias: &RealMatrix,
) -> Result<RealMatrix> {
    if input.cols() != weights.rows() {
        return Err(Error::Dimension {
            op: "dense_forward",
            expected: format!("input with {} columns", weights.rows()),
            found: format!("input {} against weights {}", input.shape_str(), weights.shape_str()),
        });
    }
    if bias.shape() != (1, weights.cols()) {
        return Err(Error::Dimension {
            op: "dense_forward",
            expected: format!("bias 1x{}", weights.cols()),
            found: format!("bias {}", bias.shape_str()),
        });
    }
    let d_out = weights.cols();
    let mut out = RealMatrix::zeros(input.rows(), d_out);
    for b in 0..input.rows() {
        let y = out.row_mut(b);
        y.copy_from_slice(bias.values());
        for (i, &x) in input.row(b).iter().enumerate() {
            axpy(y, x, weights.row(i));
        }
    }
    Ok(out)
}

/// Valid (unpadded), stride-1 1-D convolution.
///
/// `input` is `[l x c_in]`; `filters` is `[(k * c_in) x n_f]` where row
/// `j * c_in + c` holds tap `j` of input channel `c`; `bias` is `[1 x n_f]`.
/// Output is `[(l - k + 1) x n_f]`.
pub fn conv1d_forward(
    input: &RealMatrix,
    filters: &RealMatrix,
    bias: &RealMatrix,
) -> Result<RealMatrix> {
    let c_in = input.cols();
    if c_in == 0 || !filters.rows().is_multiple_of(c_in) || filters.rows() == 0 {
        return Err(Error::Dimension {
            op: "conv1d_forward",
            expected: format!("filter rows a positive multiple of {c_in} input channels"),
            found: format!("input {} against filters {}", input.shape_str(), filters.shape_str()),
        });
    }
    let n_f = filters.cols();
    if bias.shape() != (1, n_f) {
        return Err(Error::Dimension {
            op: "conv1d_forward",
            expected: format!("bias 1x{n_f}"),
            found: format!("bias {}", bias.shape_str()),
        });
    }
    let k = filters.rows() / c_in;
    let l = input.rows();
    if l < k {
        return Err(Error::InputTooShort {
            op: "conv1d_forward",
            needed: k,
            got: l,
        });
    }
    let out_len = l - k + 1;
    let mut out = RealMatrix::zeros(out_len, n_f);
    for t in 0..out_len {
        let y = out.row_mut(t);
        y.copy_from_slice(bias.values());
        for j in 0..k {
            for (c, &x) in input.row(t + j).iter().enumerate() {
                axpy(y, x, filters.row(j * c_in + c));
            }
        }
    }
    Ok(out)
}

/// Non-overlapping max pooling along the time axis. A trailing remainder
/// shorter than `width` is dropped; ties resolve to the earliest index.
///
/// Returns the pooled `[L / width x c]` sequence and, for each output cell,
/// the input row that supplied the maximum.
pub fn maxpool1d_forward(input: &RealMatrix, width: usize) -> Result<(RealMatrix, Vec<usize>)> {
    if width == 0 {
        return Err(Error::InvalidParameter("pool width must be >= 1".into()));
    }
    let l = input.rows();
    if l < width {
        return Err(Error::InputTooShort {
            op: "maxpool1d_forward",
            needed: width,
            got: l,
        });
    }
    let c = input.cols();
    let out_len = l / width;
    let mut out = RealMatrix::zeros(out_len, c);
    let mut argmax = vec![0usize; out_len * c];
    for r in 0..out_len {
        let base = r * width;
        for ch in 0..c {
            let mut best_row = base;
            let mut best = input.get(base, ch);
            for row in base + 1..base + width {
                let v = input.get(row, ch);
                if v > best {
                    best = v;
                    best_row = row;
                }
            }
            out.set(r, ch, best);
            argmax[r * c + ch] = best_row;
        }
    }
    Ok((out, argmax))
}

/// Gate layout inside the packed `4 * units` pre-activation vector.
pub(crate) const GATE_INPUT: usize = 0;
pub(crate) const GATE_FORGET: usize = 1;
pub(crate) const GATE_CANDIDATE: usize = 2;
pub(crate) const GATE_OUTPUT: usize = 3;

/// LSTM weights: `input [d_in x 4u]`, `recurrent [u x 4u]`, `bias [1 x 4u]`.
/// Column blocks of width `u` are ordered input gate, forget gate, cell
/// candidate, output gate.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub input: &'a RealMatrix,
    pub recurrent: &'a RealMatrix,
    pub bias: &'a RealMatrix,
}

impl LstmWeights<'_> {
    pub fn units(&self) -> usize {
        self.recurrent.rows()
    }

    fn check(&self, d_in: usize) -> Result<usize> {
        let u = self.units();
        let ok = u > 0
            && self.input.shape() == (d_in, 4 * u)
            && self.recurrent.shape() == (u, 4 * u)
            && self.bias.shape() == (1, 4 * u);
        if !ok {
            return Err(Error::Dimension {
                op: "lstm_forward",
                expected: format!("input {d_in}x{0}, recurrent {u}x{0}, bias 1x{0}", 4 * u),
                found: format!(
                    "input {}, recurrent {}, bias {}",
                    self.input.shape_str(),
                    self.recurrent.shape_str(),
                    self.bias.shape_str()
                ),
            });
        }
        Ok(u)
    }
}

/// Per-step activations retained for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub(crate) input: RealMatrix,
    /// Per step: activated gates `[i | f | g | o]`, `4u` values.
    pub(crate) gates: Vec<f64>,
    /// Cell state after each step, `u` values per step.
    pub(crate) cells: Vec<f64>,
    /// Hidden state after each step, `u` values per step.
    pub(crate) hidden: Vec<f64>,
    pub(crate) units: usize,
}

impl LstmCache {
    pub fn steps(&self) -> usize {
        self.input.rows()
    }
}

/// One cell update. Returns the new `(hidden, cell)` state.
pub fn lstm_step(
    x: &[f64],
    hidden: &[f64],
    cell: &[f64],
    weights: LstmWeights<'_>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let input = RealMatrix::row_vector(x)?;
    lstm_run(&input, hidden, cell, weights, None)
}

/// Runs the LSTM over `input [l x d_in]` from zero initial state and returns
/// the final hidden state plus the cache needed for the backward pass.
pub fn lstm_forward(input: &RealMatrix, weights: LstmWeights<'_>) -> Result<(Vec<f64>, LstmCache)> {
    let u = weights.units();
    let zeros = vec![0.0; u];
    let mut cache = LstmCache {
        input: input.clone(),
        gates: Vec::with_capacity(input.rows() * 4 * u),
        cells: Vec::with_capacity(input.rows() * u),
        hidden: Vec::with_capacity(input.rows() * u),
        units: u,
    };
    let (h, _) = lstm_run(input, &zeros, &zeros, weights, Some(&mut cache))?;
    Ok((h, cache))
}

/// Final hidden state only, from zero initial state.
pub fn lstm_infer(input: &RealMatrix, weights: LstmWeights<'_>) -> Result<Vec<f64>> {
    let zeros = vec![0.0; weights.units()];
    lstm_run(input, &zeros, &zeros, weights, None).map(|(h, _)| h)
}

/// Runs from an explicit `(hidden, cell)` state and returns the final state.
pub fn lstm_forward_from(
    input: &RealMatrix,
    hidden: &[f64],
    cell: &[f64],
    weights: LstmWeights<'_>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    lstm_run(input, hidden, cell, weights, None)
}

fn lstm_run(
    input: &RealMatrix,
    h0: &[f64],
    c0: &[f64],
    weights: LstmWeights<'_>,
    mut cache: Option<&mut LstmCache>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let u = weights.check(input.cols())?;
    if h0.len() != u || c0.len() != u {
        return Err(Error::Dimension {
            op: "lstm_forward",
            expected: format!("initial state of {u} units"),
            found: format!("hidden {}, cell {}", h0.len(), c0.len()),
        });
    }
    let mut h = h0.to_vec();
    let mut c = c0.to_vec();
    let mut z = vec![0.0; 4 * u];
    for t in 0..input.rows() {
        z.copy_from_slice(weights.bias.values());
        for (d, &x) in input.row(t).iter().enumerate() {
            axpy(&mut z, x, weights.input.row(d));
        }
        for (k, &hk) in h.iter().enumerate() {
            axpy(&mut z, hk, weights.recurrent.row(k));
        }
        for v in &mut z[GATE_INPUT * u..(GATE_FORGET + 1) * u] {
            *v = sigmoid(*v);
        }
        for v in &mut z[GATE_CANDIDATE * u..(GATE_CANDIDATE + 1) * u] {
            *v = v.tanh();
        }
        for v in &mut z[GATE_OUTPUT * u..(GATE_OUTPUT + 1) * u] {
            *v = sigmoid(*v);
        }
        for j in 0..u {
            let i_g = z[GATE_INPUT * u + j];
            let f_g = z[GATE_FORGET * u + j];
            let g_g = z[GATE_CANDIDATE * u + j];
            let o_g = z[GATE_OUTPUT * u + j];
            c[j] = f_g * c[j] + i_g * g_g;
            h[j] = o_g * c[j].tanh();
        }
        if !c.iter().chain(&h).all(|v| v.is_finite()) {
            return Err(Error::NumericOverflow(format!(
                "non-finite LSTM state at time step {t}"
            )));
        }
        if let Some(cache) = cache.as_deref_mut() {
            cache.gates.extend_from_slice(&z);
            cache.cells.extend_from_slice(&c);
            cache.hidden.extend_from_slice(&h);
        }
    }
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> RealMatrix {
        RealMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn dense_identity() {
        let out = dense_forward(&m(&[&[1.0, 2.0]]), &m(&[&[1.0, 0.0], &[0.0, 1.0]]), &m(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(out.values(), &[1.0, 2.0]);
    }

    #[test]
    fn dense_zero_weights_pass_bias() {
        let out = dense_forward(&m(&[&[1.0, 1.0]]), &RealMatrix::zeros(2, 2), &m(&[&[3.0, 4.0]])).unwrap();
        assert_eq!(out.values(), &[3.0, 4.0]);
    }

    #[test]
    fn dense_hand_product() {
        let out = dense_forward(&m(&[&[1.0, 2.0]]), &m(&[&[1.0], &[1.0]]), &m(&[&[0.0]])).unwrap();
        assert_eq!(out.values(), &[3.0]);
    }

    #[test]
    fn dense_shape_error_names_both_shapes() {
        let err = dense_forward(&RealMatrix::zeros(1, 3), &RealMatrix::zeros(2, 2), &RealMatrix::zeros(1, 2))
            .unwrap_err()
            .to_string();
        assert!(err.contains("1x3") && err.contains("2x2"), "{err}");
    }

    #[test]
    fn conv_hand_cases() {
        let input = RealMatrix::column(&[1.0, 2.0, 3.0]).unwrap();
        let filt = RealMatrix::column(&[1.0, 1.0, 1.0]).unwrap();
        let out = conv1d_forward(&input, &filt, &RealMatrix::zeros(1, 1)).unwrap();
        assert_eq!(out.values(), &[6.0]);

        let input = RealMatrix::column(&[1.0, 0.0, 1.0, 0.0]).unwrap();
        let filt = RealMatrix::column(&[1.0, -1.0, 1.0]).unwrap();
        let out = conv1d_forward(&input, &filt, &RealMatrix::zeros(1, 1)).unwrap();
        assert_eq!(out.values(), &[2.0, -1.0]);
    }

    #[test]
    fn conv_zero_filter_gives_bias() {
        let input = RealMatrix::column(&[0.3, -1.0, 7.0, 2.0, 9.0]).unwrap();
        let out = conv1d_forward(&input, &RealMatrix::zeros(3, 1), &m(&[&[5.0]])).unwrap();
        assert_eq!(out.values(), &[5.0, 5.0, 5.0]);
    }

    #[test]
    fn conv_short_input() {
        let err = conv1d_forward(&RealMatrix::zeros(2, 1), &RealMatrix::zeros(3, 1), &RealMatrix::zeros(1, 1));
        assert!(matches!(err, Err(Error::InputTooShort { needed: 3, got: 2, .. })));
    }

    #[test]
    fn maxpool_cases() {
        let (out, idx) = maxpool1d_forward(&RealMatrix::column(&[1.0, 3.0, 2.0, 2.0]).unwrap(), 2).unwrap();
        assert_eq!(out.values(), &[3.0, 2.0]);
        assert_eq!(idx, vec![1, 2]);

        let (out, idx) = maxpool1d_forward(&RealMatrix::column(&[5.0, 5.0]).unwrap(), 2).unwrap();
        assert_eq!(out.values(), &[5.0]);
        assert_eq!(idx, vec![0]);

        let (out, _) = maxpool1d_forward(&RealMatrix::column(&[1.0, 2.0, 3.0]).unwrap(), 2).unwrap();
        assert_eq!(out.values(), &[2.0]);

        assert!(matches!(
            maxpool1d_forward(&RealMatrix::column(&[1.0]).unwrap(), 2),
            Err(Error::InputTooShort { .. })
        ));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    fn unit_weights(u: usize, value: f64) -> (RealMatrix, RealMatrix, RealMatrix) {
        (
            RealMatrix::filled(1, 4 * u, value),
            RealMatrix::filled(u, 4 * u, value),
            RealMatrix::filled(1, 4 * u, value),
        )
    }

    #[test]
    fn lstm_zero_weights_stay_at_zero() {
        let (wi, wr, b) = unit_weights(3, 0.0);
        let w = LstmWeights { input: &wi, recurrent: &wr, bias: &b };
        let input = RealMatrix::column(&[1.0, 0.0, 1.0, 1.0]).unwrap();
        let (h, cache) = lstm_forward(&input, w).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(cache.steps(), 4);
    }

    #[test]
    fn lstm_single_step_by_hand() {
        // Unit weights, zero bias, x = 1, zero initial state: every gate
        // pre-activation is 1, so h = tanh(tanh(1) * s(1)) * s(1).
        let (wi, wr, _) = unit_weights(1, 1.0);
        let b = RealMatrix::zeros(1, 4);
        let w = LstmWeights { input: &wi, recurrent: &wr, bias: &b };
        let (h, _) = lstm_forward(&RealMatrix::column(&[1.0]).unwrap(), w).unwrap();
        let s = 1.0 / (1.0 + (-1.0f64).exp());
        let expected = (1.0f64.tanh() * s).tanh() * s;
        assert!((h[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn lstm_sequence_equals_repeated_steps() {
        let wi = RealMatrix::from_vec(1, 8, vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.7, -0.6]).unwrap();
        let wr = RealMatrix::from_vec(2, 8, (0..16).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let b = RealMatrix::from_vec(1, 8, (0..8).map(|i| 0.1 * i as f64 - 0.3).collect()).unwrap();
        let w = LstmWeights { input: &wi, recurrent: &wr, bias: &b };
        let (h_seq, _) = lstm_forward(&RealMatrix::column(&[1.0, 0.0]).unwrap(), w).unwrap();
        let (h1, c1) = lstm_step(&[1.0], &[0.0, 0.0], &[0.0, 0.0], w).unwrap();
        let (h2, _) = lstm_step(&[0.0], &h1, &c1, w).unwrap();
        assert_eq!(h_seq, h2);
    }

    #[test]
    fn lstm_overflow_reports_step() {
        // Gates are bounded, so overflow can only come from non-finite input.
        let mut wi = RealMatrix::zeros(1, 4);
        wi.set(0, 2, 1.0);
        let wr = RealMatrix::zeros(1, 4);
        let b = RealMatrix::zeros(1, 4);
        let w = LstmWeights { input: &wi, recurrent: &wr, bias: &b };
        let input = RealMatrix::from_raw(3, 1, vec![0.0, f64::NAN, 0.0]);
        let err = lstm_forward(&input, w).unwrap_err().to_string();
        assert!(err.contains("time step 1"), "{err}");
    }
}
