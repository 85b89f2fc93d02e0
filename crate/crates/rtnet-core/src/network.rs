//! Dense layer stacks with reverse-mode gradients.
//!
//! A [`DenseNetwork`] is an ordered list of affine layers, each followed by
//! an element-wise activation (or a row-wise softmax in the final layer).
//! `forward` records the post-activation output of every layer in a
//! [`ForwardTrace`]; `backward` consumes a trace together with the upstream
//! gradient `dL/dy` and produces exact gradients for every parameter plus
//! the gradient with respect to the network input, so stacked networks
//! (classifier on top of feature extractor, generators on frozen features)
//! can be chained or cut at any boundary.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    /// Row-wise softmax; only valid as the final layer's activation.
    Softmax,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softmax" => Ok(Activation::Softmax),
            other => Err(CoreError::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// One dense layer: `y = activation(W x + b)` with `W` stored row-major
/// as `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Tensor,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn from_parts(weights: Tensor, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(CoreError::Config("layer weights must be 2-D".into()));
        }
        if weights.rows() != bias.len() {
            return Err(CoreError::Config(format!(
                "bias length {} does not match weight rows {}",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Layer {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Post-activation outputs of every layer for one forward pass.
///
/// `activations[0]` is the input batch, `activations[k]` the output of
/// layer `k-1`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    activations: Vec<Tensor>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace is never empty")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].rows()
    }
}

/// Gradients for every parameter of one [`DenseNetwork`], shaped like the
/// network itself.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub d_weights: Tensor,
    pub d_bias: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| LayerGrad {
                d_weights: Tensor::zeros(l.weights.shape()),
                d_bias: vec![0.0; l.bias.len()],
            })
            .collect();
        GradientSet { layers }
    }

    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerGrad] {
        &mut self.layers
    }

    /// `self += scale * other`. Shapes must match.
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        assert_eq!(self.layers.len(), other.layers.len(), "gradient set mismatch");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.d_weights.data_mut().iter_mut().zip(b.d_weights.data()) {
                *x += scale * y;
            }
            for (x, y) in a.d_bias.iter_mut().zip(&b.d_bias) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for x in l.d_weights.data_mut() {
                *x *= s;
            }
            for x in &mut l.d_bias {
                *x *= s;
            }
        }
    }

    /// Total number of gradient entries (== the network's parameter count).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.d_weights.len() + l.d_bias.len())
            .sum()
    }

    /// Flat parameter-order accessor: all weights of layer 0, its bias,
    /// then layer 1, and so on. Mirrors [`DenseNetwork::param`].
    pub fn param(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.d_weights.len() {
                return l.d_weights.data()[idx];
            }
            idx -= l.d_weights.len();
            if idx < l.d_bias.len() {
                return l.d_bias[idx];
            }
            idx -= l.d_bias.len();
        }
        panic!("gradient index out of range");
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0_f64;
        for l in &self.layers {
            for &v in l.d_weights.data() {
                m = m.max(v.abs());
            }
            for &v in &l.d_bias {
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<Layer>,
}

impl DenseNetwork {
    /// Builds a network from explicit layers, checking dimension
    /// compatibility and the softmax-only-last rule.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(CoreError::Config("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(CoreError::Config(format!(
                    "layer output dim {} does not feed layer input dim {}",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(CoreError::Config(
                    "softmax is only valid as the final activation".into(),
                ));
            }
        }
        Ok(DenseNetwork { layers })
    }

    /// Builds a network with Xavier-uniform weights and zero biases.
    ///
    /// `dims` has one more entry than `activations`:
    /// `dims = [in, h1, ..., out]`.
    pub fn xavier<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() != activations.len() + 1 {
            return Err(CoreError::Config(format!(
                "{} dims need {} activations, got {}",
                dims.len(),
                dims.len() - 1,
                activations.len()
            )));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (k, &act) in activations.iter().enumerate() {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            if fan_in == 0 || fan_out == 0 {
                return Err(CoreError::Config("layer dims must be > 0".into()));
            }
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            let mut w = Tensor::zeros(&[fan_out, fan_in]);
            for v in w.data_mut() {
                let u: f64 = rng.random();
                *v = (2.0 * u - 1.0) * limit;
            }
            layers.push(Layer::from_parts(w, vec![0.0; fan_out], act)?);
        }
        DenseNetwork::from_layers(layers)
    }

    /// All-zero parameters; handy for fixed-point examples and tests.
    pub fn zeroed(dims: &[usize], activations: &[Activation]) -> Result<Self> {
        if dims.len() != activations.len() + 1 {
            return Err(CoreError::Config("dims/activations length mismatch".into()));
        }
        let layers = activations
            .iter()
            .enumerate()
            .map(|(k, &act)| {
                Layer::from_parts(
                    Tensor::zeros(&[dims[k + 1], dims[k]]),
                    vec![0.0; dims[k + 1]],
                    act,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNetwork::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn param(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.weights.len() {
                return l.weights.data()[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                return &mut l.weights.data_mut()[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return &mut l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Forward pass over a batch `x: [n, in_dim]`, recording a trace for
    /// [`DenseNetwork::backward`].
    pub fn forward(&self, x: &Tensor) -> Result<ForwardTrace> {
        if x.shape().len() != 2 || x.cols() != self.input_dim() {
            return Err(CoreError::Config(format!(
                "input shape {:?} does not match network input dim {}",
                x.shape(),
                self.input_dim()
            )));
        }
        let n = x.rows();
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let prev = activations.last().unwrap();
            let (din, dout) = (layer.in_dim(), layer.out_dim());
            let mut out = Tensor::zeros(&[n, dout]);
            for i in 0..n {
                let xi = prev.row(i);
                let yi = out.row_mut(i);
                for o in 0..dout {
                    let wrow = &layer.weights.data()[o * din..(o + 1) * din];
                    let mut s = layer.bias[o];
                    for (w, v) in wrow.iter().zip(xi) {
                        s += w * v;
                    }
                    yi[o] = s;
                }
                match layer.activation {
                    Activation::Linear => {}
                    Activation::Relu => {
                        for v in yi.iter_mut() {
                            if *v < 0.0 {
                                *v = 0.0;
                            }
                        }
                    }
                    Activation::Sigmoid => {
                        for v in yi.iter_mut() {
                            *v = 1.0 / (1.0 + libm::exp(-*v));
                        }
                    }
                    Activation::Softmax => softmax_row(yi),
                }
            }
            activations.push(out);
        }
        let trace = ForwardTrace { activations };
        if !trace.output().all_finite() {
            return Err(CoreError::Numeric("non-finite network output".into()));
        }
        Ok(trace)
    }

    /// Reverse-mode pass. `upstream` is `dL/dy` for the traced output;
    /// returns parameter gradients and `dL/dx`.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Tensor) -> Result<(GradientSet, Tensor)> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(CoreError::Usage(
                "forward trace does not match network depth".into(),
            ));
        }
        let out = trace.output();
        if upstream.shape() != out.shape() {
            return Err(CoreError::Usage(format!(
                "upstream shape {:?} does not match output shape {:?}",
                upstream.shape(),
                out.shape()
            )));
        }
        let n = trace.batch_size();
        let mut grads = GradientSet::zeros_like(self);
        let mut d_out = upstream.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (din, dout) = (layer.in_dim(), layer.out_dim());
            let input = &trace.activations[k];
            let output = &trace.activations[k + 1];
            let mut d_in = Tensor::zeros(&[n, din]);
            let lg = &mut grads.layers[k];
            for i in 0..n {
                let yi = output.row(i);
                let gi = d_out.row(i);
                // dL/d(pre-activation), computable from post-activation values.
                let mut d_pre = vec![0.0; dout];
                match layer.activation {
                    Activation::Linear => d_pre.copy_from_slice(gi),
                    Activation::Relu => {
                        for o in 0..dout {
                            d_pre[o] = if yi[o] > 0.0 { gi[o] } else { 0.0 };
                        }
                    }
                    Activation::Sigmoid => {
                        for o in 0..dout {
                            d_pre[o] = gi[o] * yi[o] * (1.0 - yi[o]);
                        }
                    }
                    Activation::Softmax => {
                        let dot: f64 = gi.iter().zip(yi).map(|(g, p)| g * p).sum();
                        for o in 0..dout {
                            d_pre[o] = yi[o] * (gi[o] - dot);
                        }
                    }
                }
                let xi = input.row(i);
                let d_in_i = d_in.row_mut(i);
                for o in 0..dout {
                    let dz = d_pre[o];
                    lg.d_bias[o] += dz;
                    let wrow = &layer.weights.data()[o * din..(o + 1) * din];
                    let dwrow = &mut lg.d_weights.data_mut()[o * din..(o + 1) * din];
                    for j in 0..din {
                        dwrow[j] += dz * xi[j];
                        d_in_i[j] += dz * wrow[j];
                    }
                }
            }
            d_out = d_in;
        }
        Ok((grads, d_out))
    }
}

/// In-place numerically stable softmax over one row.
pub fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
