use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, dot, RealMatrix};
use super::ops::{
    conv1d_forward, dense_forward, lstm_forward, lstm_infer, maxpool1d_forward, relu, LstmCache,
    LstmWeights, GATE_CANDIDATE, GATE_FORGET, GATE_INPUT, GATE_OUTPUT,
};
use super::param::{Init, ParamTensor};
use crate::error::{Error, Result};

/// Shape description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { inputs: usize, units: usize },
    Conv1d { in_channels: usize, filters: usize, kernel: usize },
    Maxpool1d { width: usize },
    Lstm { inputs: usize, units: usize },
    Relu,
    Tanh,
    Flatten,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = match *self {
            LayerSpec::Dense { inputs, units } => inputs == 0 || units == 0,
            LayerSpec::Conv1d { in_channels, filters, kernel } => {
                in_channels == 0 || filters == 0 || kernel == 0
            }
            LayerSpec::Maxpool1d { width } => width == 0,
            LayerSpec::Lstm { inputs, units } => inputs == 0 || units == 0,
            LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Flatten => false,
        };
        if bad {
            return Err(Error::InvalidParameter(format!("{self:?}: sizes must be >= 1")));
        }
        Ok(())
    }

    /// Shapes of the trainable tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        match *self {
            LayerSpec::Dense { inputs, units } => vec![(inputs, units), (1, units)],
            LayerSpec::Conv1d { in_channels, filters, kernel } => {
                vec![(kernel * in_channels, filters), (1, filters)]
            }
            LayerSpec::Lstm { inputs, units } => {
                vec![(inputs, 4 * units), (units, 4 * units), (1, 4 * units)]
            }
            _ => Vec::new(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Maxpool1d { .. } => "maxpool1d",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Relu => "relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Flatten => "flatten",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub weights: ParamTensor,
    pub bias: ParamTensor,
    cache: Option<RealMatrix>,
}

impl Dense {
    pub fn new(weights: ParamTensor, bias: ParamTensor) -> Self {
        Self { weights, bias, cache: None }
    }

    pub fn infer(&self, input: &RealMatrix) -> Result<RealMatrix> {
        dense_forward(input, &self.weights.value, &self.bias.value)
    }

    pub fn forward(&mut self, input: &RealMatrix) -> Result<RealMatrix> {
        let out = self.infer(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &RealMatrix) -> Result<RealMatrix> {
        let input = self.cache.take().ok_or(Error::MissingCache { layer: "dense" })?;
        check_grad_shape("dense", grad_out, (input.rows(), self.weights.value.cols()))?;
        let mut grad_in = RealMatrix::zeros(input.rows(), input.cols());
        for b in 0..input.rows() {
            let g = grad_out.row(b);
            axpy(self.bias.grad.row_mut(0), 1.0, g);
            for (i, &x) in input.row(b).iter().enumerate() {
                if x != 0.0 {
                    axpy(self.weights.grad.row_mut(i), x, g);
                }
                grad_in.set(b, i, dot(self.weights.value.row(i), g));
            }
        }
        Ok(grad_in)
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub filters: ParamTensor,
    pub bias: ParamTensor,
    kernel: usize,
    cache: Option<RealMatrix>,
}

impl Conv1d {
    /// `filters` is `[(kernel * in_channels) x n_filters]`.
    pub fn new(filters: ParamTensor, bias: ParamTensor, kernel: usize) -> Self {
        Self { filters, bias, kernel, cache: None }
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn infer(&self, input: &RealMatrix) -> Result<RealMatrix> {
        if self.filters.value.rows() != self.kernel * input.cols() {
            return Err(Error::Dimension {
                op: "conv1d",
                expected: format!("{} input channels", self.filters.value.rows() / self.kernel),
                found: format!("input {}", input.shape_str()),
            });
        }
        conv1d_forward(input, &self.filters.value, &self.bias.value)
    }

    pub fn forward(&mut self, input: &RealMatrix) -> Result<RealMatrix> {
        let out = self.infer(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &RealMatrix) -> Result<RealMatrix> {
        let input = self.cache.take().ok_or(Error::MissingCache { layer: "conv1d" })?;
        let c_in = input.cols();
        let k = self.kernel;
        let out_len = input.rows() + 1 - k;
        check_grad_shape("conv1d", grad_out, (out_len, self.filters.value.cols()))?;
        let mut grad_in = RealMatrix::zeros(input.rows(), c_in);
        for t in 0..out_len {
            let g = grad_out.row(t);
            axpy(self.bias.grad.row_mut(0), 1.0, g);
            for j in 0..k {
                for c in 0..c_in {
                    let row = j * c_in + c;
                    let x = input.get(t + j, c);
                    if x != 0.0 {
                        axpy(self.filters.grad.row_mut(row), x, g);
                    }
                    let acc = grad_in.get(t + j, c) + dot(self.filters.value.row(row), g);
                    grad_in.set(t + j, c, acc);
                }
            }
        }
        Ok(grad_in)
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub width: usize,
    cache: Option<(usize, usize, Vec<usize>)>,
}

impl MaxPool1d {
    pub fn new(width: usize) -> Self {
        Self { width, cache: None }
    }

    pub fn infer(&self, input: &RealMatrix) -> Result<RealMatrix> {
        maxpool1d_forward(input, self.width).map(|(out, _)| out)
    }

    pub fn forward(&mut self, input: &RealMatrix) -> Result<RealMatrix> {
        let (out, argmax) = maxpool1d_forward(input, self.width)?;
        self.cache = Some((input.rows(), input.cols(), argmax));
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &RealMatrix) -> Result<RealMatrix> {
        let (rows, cols, argmax) =
            self.cache.take().ok_or(Error::MissingCache { layer: "maxpool1d" })?;
        check_grad_shape("maxpool1d", grad_out, (rows / self.width, cols))?;
        let mut grad_in = RealMatrix::zeros(rows, cols);
        for (cell, &src) in argmax.iter().enumerate() {
            let ch = cell % cols;
            let v = grad_in.get(src, ch) + grad_out.values()[cell];
            grad_in.set(src, ch, v);
        }
        Ok(grad_in)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    cache: Option<RealMatrix>,
}

impl Relu {
    pub fn infer(&self, input: &RealMatrix) -> Result<RealMatrix> {
        let values = input.values().iter().map(|&x| relu(x)).collect();
        Ok(RealMatrix::from_raw(input.rows(), input.cols(), values))
    }

    pub fn forward(&mut self, input: &RealMatrix) -> Result<RealMatrix> {
        let out = self.infer(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &RealMatrix) -> Result<RealMatrix> {
        let input = self.cache.take().ok_or(Error::MissingCache { layer: "relu" })?;
        check_grad_shape("relu", grad_out, input.shape())?;
        let values = input
            .values()
            .iter()
            .zip(grad_out.values())
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect();
        Ok(RealMatrix::from_raw(input.rows(), input.cols(), values))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tanh {
    cache: Option<RealMatrix>,
}

impl Tanh {
    pub fn infer(&self, input: &RealMatrix) -> Result<RealMatrix> {
        let values = input.values().iter().map(|x| x.tanh()).collect();
        Ok(RealMatrix::from_raw(input.rows(), input.cols(), values))
    }

    pub fn forward(&mut self, input: &RealMatrix) -> Result<RealMatrix> {
        let out = self.infer(input)?;
        self.cache = Some(out.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &RealMatrix) -> Result<RealMatrix> {
        let out = self.cache.take().ok_or(Error::MissingCache { layer: "tanh" })?;
        check_grad_shape("tanh", grad_out, out.shape())?;
        let values = out
            .values()
            .iter()
            .zip(grad_out.values())
            .map(|(&y, &g)| g * (1.0 - y * y))
            .collect();
        Ok(RealMatrix::from_raw(out.rows(), out.cols(), values))
    }
}

/// `[L x c]` to `[1 x L*c]`, row-major.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    cache: Option<(usize, usize)>,
}

impl Flatten {
    pub fn infer(&self, input: &RealMatrix) -> Result<RealMatrix> {
        input.clone().reshape(1, input.len())
    }

    pub fn forward(&mut self, input: &RealMatrix) -> Result<RealMatrix> {
        self.cache = Some(input.shape());
        self.infer(input)
    }

    pub fn backward(&mut self, grad_out: &RealMatrix) -> Result<RealMatrix> {
        let (rows, cols) = self.cache.take().ok_or(Error::MissingCache { layer: "flatten" })?;
        check_grad_shape("flatten", grad_out, (1, rows * cols))?;
        grad_out.clone().reshape(rows, cols)
    }
}

/// LSTM over a `[l x d_in]` sequence, emitting the final hidden state as `[1 x u]`.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub input_weights: ParamTensor,
    pub recurrent_weights: ParamTensor,
    pub bias: ParamTensor,
    cache: Option<LstmCache>,
}

impl Lstm {
    pub fn new(input_weights: ParamTensor, recurrent_weights: ParamTensor, bias: ParamTensor) -> Self {
        Self {
            input_weights,
            recurrent_weights,
            bias,
            cache: None,
        }
    }

    pub fn units(&self) -> usize {
        self.recurrent_weights.value.rows()
    }

    pub fn weights(&self) -> LstmWeights<'_> {
        LstmWeights {
            input: &self.input_weights.value,
            recurrent: &self.recurrent_weights.value,
            bias: &self.bias.value,
        }
    }

    pub fn infer(&self, input: &RealMatrix) -> Result<RealMatrix> {
        let h = lstm_infer(input, self.weights())?;
        Ok(RealMatrix::from_raw(1, h.len(), h))
    }

    pub fn forward(&mut self, input: &RealMatrix) -> Result<RealMatrix> {
        let (h, cache) = lstm_forward(input, self.weights())?;
        self.cache = Some(cache);
        Ok(RealMatrix::from_raw(1, h.len(), h))
    }

    /// Backpropagation through time from a gradient on the final hidden state.
    pub fn backward(&mut self, grad_out: &RealMatrix) -> Result<RealMatrix> {
        let cache = self.cache.take().ok_or(Error::MissingCache { layer: "lstm" })?;
        let u = cache.units;
        check_grad_shape("lstm", grad_out, (1, u))?;
        let steps = cache.steps();
        let d_in = cache.input.cols();
        let mut grad_in = RealMatrix::zeros(steps, d_in);
        let mut dh = grad_out.values().to_vec();
        let mut dc = vec![0.0; u];
        let mut dz = vec![0.0; 4 * u];
        let zeros = vec![0.0; u];

        for t in (0..steps).rev() {
            let gates = &cache.gates[t * 4 * u..(t + 1) * 4 * u];
            let c_t = &cache.cells[t * u..(t + 1) * u];
            let (c_prev, h_prev) = if t == 0 {
                (&zeros[..], &zeros[..])
            } else {
                (
                    &cache.cells[(t - 1) * u..t * u],
                    &cache.hidden[(t - 1) * u..t * u],
                )
            };
            for j in 0..u {
                let i_g = gates[GATE_INPUT * u + j];
                let f_g = gates[GATE_FORGET * u + j];
                let g_g = gates[GATE_CANDIDATE * u + j];
                let o_g = gates[GATE_OUTPUT * u + j];
                let tc = c_t[j].tanh();
                let d_o = dh[j] * tc;
                let d_c = dc[j] + dh[j] * o_g * (1.0 - tc * tc);
                dz[GATE_INPUT * u + j] = d_c * g_g * i_g * (1.0 - i_g);
                dz[GATE_FORGET * u + j] = d_c * c_prev[j] * f_g * (1.0 - f_g);
                dz[GATE_CANDIDATE * u + j] = d_c * i_g * (1.0 - g_g * g_g);
                dz[GATE_OUTPUT * u + j] = d_o * o_g * (1.0 - o_g);
                dc[j] = d_c * f_g;
            }
            axpy(self.bias.grad.row_mut(0), 1.0, &dz);
            for (d, &x) in cache.input.row(t).iter().enumerate() {
                if x != 0.0 {
                    axpy(self.input_weights.grad.row_mut(d), x, &dz);
                }
                let acc = dot(self.input_weights.value.row(d), &dz);
                grad_in.set(t, d, acc);
            }
            for (k, &hk) in h_prev.iter().enumerate() {
                if hk != 0.0 {
                    axpy(self.recurrent_weights.grad.row_mut(k), hk, &dz);
                }
                dh[k] = dot(self.recurrent_weights.value.row(k), &dz);
            }
        }
        Ok(grad_in)
    }
}

fn check_grad_shape(layer: &'static str, grad: &RealMatrix, expected: (usize, usize)) -> Result<()> {
    if grad.shape() != expected {
        return Err(Error::Dimension {
            op: layer,
            expected: format!("upstream gradient {}x{}", expected.0, expected.1),
            found: format!("upstream gradient {}", grad.shape_str()),
        });
    }
    Ok(())
}

/// A layer instance: spec plus parameters plus forward cache.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    Maxpool1d(MaxPool1d),
    Lstm(Lstm),
    Relu(Relu),
    Tanh(Tanh),
    Flatten(Flatten),
}

impl Layer {
    /// Builds a layer with freshly initialized weights and zero biases.
    pub fn build<R: Rng + ?Sized>(spec: LayerSpec, init: Init, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            LayerSpec::Dense { inputs, units } => Layer::Dense(Dense::new(
                ParamTensor::new(init.sample(rng, inputs, units, inputs, units)),
                ParamTensor::zeros(1, units),
            )),
            LayerSpec::Conv1d { in_channels, filters, kernel } => {
                let fan_in = kernel * in_channels;
                Layer::Conv1d(Conv1d::new(
                    ParamTensor::new(init.sample(rng, fan_in, filters, fan_in, kernel * filters)),
                    ParamTensor::zeros(1, filters),
                    kernel,
                ))
            }
            LayerSpec::Lstm { inputs, units } => Layer::Lstm(Lstm::new(
                ParamTensor::new(init.sample(rng, inputs, 4 * units, inputs, 4 * units)),
                ParamTensor::new(init.sample(rng, units, 4 * units, units, 4 * units)),
                ParamTensor::zeros(1, 4 * units),
            )),
            LayerSpec::Maxpool1d { width } => Layer::Maxpool1d(MaxPool1d::new(width)),
            LayerSpec::Relu => Layer::Relu(Relu::default()),
            LayerSpec::Tanh => Layer::Tanh(Tanh::default()),
            LayerSpec::Flatten => Layer::Flatten(Flatten::default()),
        })
    }

    /// Builds a layer from explicit parameter values (checkpoint restore).
    pub fn from_params(spec: LayerSpec, params: Vec<RealMatrix>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.param_shapes();
        if params.len() != shapes.len()
            || params.iter().zip(&shapes).any(|(p, s)| p.shape() != *s)
        {
            return Err(Error::Dimension {
                op: "Layer::from_params",
                expected: format!("{} tensors shaped {shapes:?}", shapes.len()),
                found: format!("{:?}", params.iter().map(|p| p.shape()).collect::<Vec<_>>()),
            });
        }
        let mut it = params.into_iter().map(ParamTensor::new);
        let mut next = || it.next().expect("shape count checked");
        Ok(match spec {
            LayerSpec::Dense { .. } => Layer::Dense(Dense::new(next(), next())),
            LayerSpec::Conv1d { kernel, .. } => {
                let (f, b) = (next(), next());
                Layer::Conv1d(Conv1d::new(f, b, kernel))
            }
            LayerSpec::Lstm { .. } => {
                let (a, b, c) = (next(), next(), next());
                Layer::Lstm(Lstm::new(a, b, c))
            }
            LayerSpec::Maxpool1d { width } => Layer::Maxpool1d(MaxPool1d::new(width)),
            LayerSpec::Relu => Layer::Relu(Relu::default()),
            LayerSpec::Tanh => Layer::Tanh(Tanh::default()),
            LayerSpec::Flatten => Layer::Flatten(Flatten::default()),
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense {
                inputs: d.weights.value.rows(),
                units: d.weights.value.cols(),
            },
            Layer::Conv1d(c) => LayerSpec::Conv1d {
                in_channels: c.filters.value.rows() / c.kernel,
                filters: c.filters.value.cols(),
                kernel: c.kernel,
            },
            Layer::Maxpool1d(p) => LayerSpec::Maxpool1d { width: p.width },
            Layer::Lstm(l) => LayerSpec::Lstm {
                inputs: l.input_weights.value.rows(),
                units: l.units(),
            },
            Layer::Relu(_) => LayerSpec::Relu,
            Layer::Tanh(_) => LayerSpec::Tanh,
            Layer::Flatten(_) => LayerSpec::Flatten,
        }
    }

    pub fn infer(&self, input: &RealMatrix) -> Result<RealMatrix> {
        match self {
            Layer::Dense(l) => l.infer(input),
            Layer::Conv1d(l) => l.infer(input),
            Layer::Maxpool1d(l) => l.infer(input),
            Layer::Lstm(l) => l.infer(input),
            Layer::Relu(l) => l.infer(input),
            Layer::Tanh(l) => l.infer(input),
            Layer::Flatten(l) => l.infer(input),
        }
    }

    pub fn forward(&mut self, input: &RealMatrix) -> Result<RealMatrix> {
        match self {
            Layer::Dense(l) => l.forward(input),
            Layer::Conv1d(l) => l.forward(input),
            Layer::Maxpool1d(l) => l.forward(input),
            Layer::Lstm(l) => l.forward(input),
            Layer::Relu(l) => l.forward(input),
            Layer::Tanh(l) => l.forward(input),
            Layer::Flatten(l) => l.forward(input),
        }
    }

    pub fn backward(&mut self, grad_out: &RealMatrix) -> Result<RealMatrix> {
        match self {
            Layer::Dense(l) => l.backward(grad_out),
            Layer::Conv1d(l) => l.backward(grad_out),
            Layer::Maxpool1d(l) => l.backward(grad_out),
            Layer::Lstm(l) => l.backward(grad_out),
            Layer::Relu(l) => l.backward(grad_out),
            Layer::Tanh(l) => l.backward(grad_out),
            Layer::Flatten(l) => l.backward(grad_out),
        }
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        match self {
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            Layer::Conv1d(l) => vec![&l.filters, &l.bias],
            Layer::Lstm(l) => vec![&l.input_weights, &l.recurrent_weights, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Conv1d(l) => vec![&mut l.filters, &mut l.bias],
            Layer::Lstm(l) => vec![&mut l.input_weights, &mut l.recurrent_weights, &mut l.bias],
            _ => Vec::new(),
        }
    }
}
