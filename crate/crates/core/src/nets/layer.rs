use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{sample_uniform, Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Softplus,
    Sigmoid,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
            // floored so the output stays strictly positive even when exp underflows
            Activation::Softplus => softplus(x).max(f64::MIN_POSITIVE),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the pre-activation `x` and the output `y = f(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Softplus => sigmoid(x),
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Affine map followed by an elementwise activation: `f(x · W + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub name: String,
    /// `fan_in × fan_out`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Gradients for one [`DenseLayer`], same shapes as its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: Matrix::zeros(layer.fan_in(), layer.fan_out()),
            bias: vec![0.0; layer.fan_out()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.as_slice().iter().chain(&self.bias).copied()
    }
}

impl DenseLayer {
    /// Xavier-uniform weights `U(±sqrt(6 / (fan_in + fan_out)))`, zero bias.
    pub fn xavier(
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        stream: &RngStream,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            name: name.into(),
            weights: sample_uniform(stream, fan_in, fan_out, -limit, limit),
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }

    /// Returns `(pre_activation, output)`.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.fan_in() {
            return Err(Error::Shape(format!(
                "layer `{}` expects {} inputs, got {}",
                self.name,
                self.fan_in(),
                x.cols()
            )));
        }
        let pre = x.matmul(&self.weights)?.add_row_broadcast(&self.bias)?;
        let act = self.activation;
        let out = pre.map(|v| act.apply(v));
        Ok((pre, out))
    }

    /// Backprop through the activation and the affine map.
    ///
    /// Returns the parameter gradients and the gradient w.r.t. the layer input.
    pub fn backward(&self, input: &Matrix, pre: &Matrix, out: &Matrix, d_out: &Matrix) -> Result<(LayerGrad, Matrix)> {
        if d_out.shape() != out.shape() {
            return Err(Error::Shape(format!(
                "layer `{}` output gradient {:?}, expected {:?}",
                self.name,
                d_out.shape(),
                out.shape()
            )));
        }
        let act = self.activation;
        let mut d_pre = d_out.clone();
        for ((g, &x), &y) in d_pre.as_mut_slice().iter_mut().zip(pre.as_slice()).zip(out.as_slice()) {
            *g *= act.derivative(x, y);
        }
        let weights = input.t_matmul(&d_pre)?;
        let bias = d_pre.column_sums();
        let d_input = d_pre.matmul_t(&self.weights)?;
        Ok((LayerGrad { weights, bias }, d_input))
    }

    /// Flattened parameters: weights row-major, then bias.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.as_slice().iter().chain(&self.bias).copied()
    }

    pub(crate) fn load_flat(&mut self, values: &[f64]) {
        let nw = self.weights.as_slice().len();
        self.weights.as_mut_slice().copy_from_slice(&values[..nw]);
        let nb = self.bias.len();
        self.bias.copy_from_slice(&values[nw..nw + nb]);
    }
}

/// Stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// What forward kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer; `inputs[0]` is the network input.
    pub inputs: Vec<Matrix>,
    pub pres: Vec<Matrix>,
    pub outputs: Vec<Matrix>,
}

impl Mlp {
    /// Layers `widths[0] → widths[1] → ...`; hidden layers use `hidden`, the last uses `last`.
    pub fn new(prefix: &str, widths: &[usize], hidden: Activation, last: Activation, stream: &RngStream) -> Self {
        let n = widths.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { last } else { hidden };
                let name = format!("{prefix}.{i}");
                DenseLayer::xavier(&name, widths[i], widths[i + 1], act, &stream.child(&name))
            })
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> Option<usize> {
        self.layers.first().map(DenseLayer::fan_in)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pres: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut current = x.clone();
        for layer in &self.layers {
            let (pre, out) = layer.forward(&current)?;
            cache.inputs.push(current);
            cache.pres.push(pre);
            current = out.clone();
            cache.outputs.push(out);
        }
        Ok((current, cache))
    }

    /// Gradients per layer (input order) and the gradient w.r.t. the network input.
    pub fn backward(&self, cache: &MlpCache, d_out: &Matrix) -> Result<(Vec<LayerGrad>, Matrix)> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d = d_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (g, d_in) = layer.backward(&cache.inputs[i], &cache.pres[i], &cache.outputs[i], &d)?;
            grads.push(g);
            d = d_in;
        }
        grads.reverse();
        Ok((grads, d))
    }
}

/// Anything whose parameters live in an ordered list of dense layers.
pub trait Layered {
    fn layers(&self) -> Vec<&DenseLayer>;
    fn layers_mut(&mut self) -> Vec<&mut DenseLayer>;

    fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// Every parameter in layer order, weights before bias within a layer.
    fn flat_params(&self) -> Vec<f64> {
        self.layers().iter().flat_map(|l| l.flat()).collect()
    }

    fn set_flat_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.param_count(), "flat parameter length");
        let mut offset = 0;
        for layer in self.layers_mut() {
            let n = layer.param_count();
            layer.load_flat(&values[offset..offset + n]);
            offset += n;
        }
    }

    /// Name of the layer owning flat parameter `index`.
    fn layer_of(&self, index: usize) -> Option<String> {
        let mut offset = 0;
        for layer in self.layers() {
            offset += layer.param_count();
            if index < offset {
                return Some(layer.name.clone());
            }
        }
        None
    }
}

impl Layered for Mlp {
    fn layers(&self) -> Vec<&DenseLayer> {
        self.layers.iter().collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        self.layers.iter_mut().collect()
    }
}

/// Flattens per-layer gradients in the same order as [`Layered::flat_params`].
pub fn flatten_grads(grads: &[LayerGrad]) -> Vec<f64> {
    grads.iter().flat_map(LayerGrad::flat).collect()
}
