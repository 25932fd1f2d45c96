use rand::Rng;

use super::layers::{Layer, LayerSpec};
use super::matrix::RealMatrix;
use super::param::{Init, ParamTensor};
use crate::error::Result;

/// A sequential stack of layers.
#[derive(Debug, Clone, Default)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    /// Builds each spec with its paired initializer.
    pub fn build<R: Rng + ?Sized>(specs: &[(LayerSpec, Init)], rng: &mut R) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|&(spec, init)| Layer::build(spec, init, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    /// Read-only forward pass; safe to share across threads.
    pub fn infer(&self, input: &RealMatrix) -> Result<RealMatrix> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    /// Forward pass that caches what [`Network::backward`] needs.
    pub fn forward(&mut self, input: &RealMatrix) -> Result<RealMatrix> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &RealMatrix) -> Result<RealMatrix> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamTensor> {
        self.layers.iter().flat_map(Layer::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut)
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(ParamTensor::zero_grad);
    }

    pub fn adam_step(&mut self, learning_rate: f64) -> Result<()> {
        self.params_mut().try_for_each(|p| p.adam_step(learning_rate))
    }

    pub fn parameter_count(&self) -> usize {
        self.params().map(ParamTensor::len).sum()
    }

    /// Copies of all parameter values, in storage order.
    pub fn snapshot(&self) -> Vec<RealMatrix> {
        self.params().map(|p| p.value.clone()).collect()
    }

    /// Restores values captured by [`Network::snapshot`].
    pub fn restore(&mut self, snapshot: &[RealMatrix]) {
        for (p, v) in self.params_mut().zip(snapshot) {
            p.value.values_mut().copy_from_slice(v.values());
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(|p| p.value.is_finite())
    }
}
