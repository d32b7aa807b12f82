use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{join, Parameterized};
use super::tensor::{dot, Tensor2};
use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => libm::tanh(x),
        }
    }

    /// Derivative expressed through the pre-activation; ReLU takes 0 at 0.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(pre);
                1.0 - t * t
            }
        }
    }
}

/// `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(weight: Tensor2, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(config_err!("bias length {} != {} rows", bias.len(), weight.rows()));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Tensor2::zeros(output, input), bias: vec![0.0; output] }
    }

    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let weight = Tensor2::uniform_init(output, input, rng);
        let bound = 1.0 / libm::sqrt(input.max(1) as f64);
        let bias = (0..output).map(|_| rng.random_range(-bound..=bound)).collect();
        Self { weight, bias }
    }

    pub fn input_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.rows()
    }

    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.weight.rows()).map(|i| dot(self.weight.row(i), input) + self.bias[i]));
    }
}

impl Parameterized for Linear {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((join(prefix, "weight"), self.weight.data()));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((join(prefix, "weight"), self.weight.data_mut()));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

/// Stack of [`Linear`] layers; the hidden activation is applied between
/// layers and never after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Linear>,
    activation: Activation,
}

/// Values saved by [`Mlp::forward`] for the matching backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl Mlp {
    /// `widths` lists the input width followed by each layer's output width.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect();
        Ok(Self { layers, activation })
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect();
        Ok(Self { layers, activation })
    }

    pub fn from_layers(layers: Vec<Linear>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(config_err!("an MLP needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(config_err!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].output_width(),
                    i + 1,
                    pair[1].input_width()
                ));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Linear::zeros(l.input_width(), l.output_width()))
            .collect();
        Self { layers, activation: self.activation }
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width() {
            return Err(config_err!(
                "MLP expects input width {}, got {}",
                self.input_width(),
                input.len()
            ));
        }
        Ok(())
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut current = input.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&current, &mut next);
            if i != last {
                next.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            core::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut pre = Vec::new();
            layer.forward_into(&current, &mut pre);
            let post = if i == last {
                pre.clone()
            } else {
                pre.iter().map(|&v| self.activation.apply(v)).collect()
            };
            inputs.push(core::mem::replace(&mut current, post));
            pre_activations.push(pre);
        }
        Ok((current, MlpCache { inputs, pre_activations }))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input.
    pub fn backward_into(&self, cache: &MlpCache, output_grad: &[f64], grads: &mut Mlp) -> Result<Vec<f64>> {
        self.check_cache(cache)?;
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Internal(format!(
                "gradient buffer has {} layers, network has {}",
                grads.layers.len(),
                self.layers.len()
            )));
        }
        if output_grad.len() != self.output_width() {
            return Err(config_err!(
                "output gradient width {} != {}",
                output_grad.len(),
                self.output_width()
            ));
        }
        let last = self.layers.len() - 1;
        let mut upstream = output_grad.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let delta: Vec<f64> = if i == last {
                upstream
            } else {
                upstream
                    .iter()
                    .zip(&cache.pre_activations[i])
                    .map(|(g, &pre)| g * self.activation.derivative(pre))
                    .collect()
            };
            let input = &cache.inputs[i];
            let g = &mut grads.layers[i];
            for (r, &dr) in delta.iter().enumerate() {
                if dr == 0.0 {
                    continue;
                }
                g.bias[r] += dr;
                for (gw, &x) in g.weight.row_mut(r).iter_mut().zip(input) {
                    *gw += dr * x;
                }
            }
            let mut below = vec![0.0; layer.input_width()];
            for (r, &dr) in delta.iter().enumerate() {
                if dr == 0.0 {
                    continue;
                }
                for (b, &w) in below.iter_mut().zip(layer.weight.row(r)) {
                    *b += dr * w;
                }
            }
            upstream = below;
        }
        Ok(upstream)
    }

    /// Returns fresh parameter gradients and the input gradient.
    pub fn backward(&self, cache: &MlpCache, output_grad: &[f64]) -> Result<(Mlp, Vec<f64>)> {
        let mut grads = self.zeros_like();
        let input_grad = self.backward_into(cache, output_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    fn check_cache(&self, cache: &MlpCache) -> Result<()> {
        let fits = cache.inputs.len() == self.layers.len()
            && cache.pre_activations.len() == self.layers.len()
            && self.layers.iter().zip(&cache.inputs).zip(&cache.pre_activations).all(|((l, x), p)| {
                x.len() == l.input_width() && p.len() == l.output_width()
            });
        if fits {
            Ok(())
        } else {
            Err(Error::Internal("activation cache does not match this network".into()))
        }
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(config_err!("an MLP needs an input width and at least one layer width"));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(config_err!("layer widths must be positive, got {widths:?}"));
    }
    Ok(())
}

impl Parameterized for Mlp {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.collect(&join(prefix, &format!("layer{i}")), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.collect_mut(&join(prefix, &format!("layer{i}")), out);
        }
    }
}
