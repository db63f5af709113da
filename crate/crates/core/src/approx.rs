//! Small feed-forward networks with hand-written backpropagation.
//!
//! A [`Net`] is a stack of dense layers with a tanh or rectifier between
//! them and one of three heads on top: softmax (categorical policies),
//! diagonal Gaussian (continuous policies, emitting mean and log-stddev) or
//! identity (critics, regressors). [`Adam`] applies descent steps to a net
//! given gradients of a loss.

use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distrib::{softmax, Simplex};
use crate::rng::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const DEFAULT_LEARNING_RATE: f64 = 3e-4;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite gradient; update skipped")]
    NonFiniteGradient,
    #[error("invalid network: {0}")]
    InvalidNet(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Softmax,
    /// First half of the outputs is the mean, second half the log-stddev.
    Gaussian,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, &b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    /// `[mean..., log_std...]`, the layout a Gaussian head's gradient uses.
    pub fn flatten(&self) -> Vec<f64> {
        self.mean.iter().chain(&self.log_std).copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Output {
    Vector(Vec<f64>),
    Probs(Simplex),
    Gaussian(GaussianParams),
}

impl Output {
    pub fn as_probs(&self) -> Option<&Simplex> {
        match self {
            Output::Probs(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianParams> {
        match self {
            Output::Gaussian(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Output::Vector(v) => Some(v),
            _ => None,
        }
    }
}

/// Intermediate values of one forward pass, consumed by [`Net::backward`].
#[derive(Clone, Debug)]
pub struct Trace {
    /// Input to each layer; `activations[0]` is the network input.
    activations: Vec<Vec<f64>>,
    /// Pre-activation of each layer (the last entry is the raw head input).
    pre: Vec<Vec<f64>>,
    output: Output,
}

impl Trace {
    pub fn output(&self) -> &Output {
        &self.output
    }

    pub fn raw(&self) -> &[f64] {
        self.pre.last().expect("trace has at least one layer")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub layers: Vec<Layer>,
    /// One entry per hidden layer.
    pub hidden: Vec<Activation>,
    pub head: Head,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grads {
    pub layers: Vec<Layer>,
}

impl Grads {
    pub fn zeros_like(net: &Net) -> Self {
        Grads {
            layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Grads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += scale * y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += scale * y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|x| *x *= s);
            l.bias.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().map(f64::abs).fold(0.0, f64::max)
    }
}

impl Net {
    /// Glorot-uniform weights, zero biases. `sizes` lists the input width,
    /// hidden widths and raw output width.
    pub fn new(sizes: &[usize], activation: Activation, head: Head, rng: &mut Rng) -> Self {
        let mut net = Net::zeros(sizes, activation, head);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
            layer.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
        }
        net
    }

    pub fn zeros(sizes: &[usize], activation: Activation, head: Head) -> Self {
        assert!(sizes.len() >= 2, "a net needs input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let layers: Vec<Layer> = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        let hidden = vec![activation; layers.len() - 1];
        Net { layers, hidden, head }
    }

    pub fn validate(&self) -> Result<(), ApproxError> {
        if self.layers.is_empty() || self.hidden.len() + 1 != self.layers.len() {
            return Err(ApproxError::InvalidNet("hidden activations must be one fewer than layers".into()));
        }
        for w in self.layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(ApproxError::InvalidNet("layer widths do not chain".into()));
            }
        }
        for l in &self.layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(ApproxError::InvalidNet("parameter array has wrong length".into()));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(ApproxError::InvalidNet("non-finite parameter".into()));
            }
        }
        if self.head == Head::Gaussian && self.raw_output_dim() % 2 != 0 {
            return Err(ApproxError::InvalidNet("gaussian head needs an even output width".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn raw_output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Output, ApproxError> {
        Ok(self.forward_trace(x)?.output)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace, ApproxError> {
        if x.len() != self.input_dim() {
            return Err(ApproxError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.apply(&activations[i], &mut z);
            if i + 1 < self.layers.len() {
                let act = self.hidden[i];
                activations.push(z.iter().map(|&v| act.apply(v)).collect());
            }
            pre.push(z);
        }
        let raw = pre.last().expect("non-empty");
        let output = match self.head {
            Head::Identity => Output::Vector(raw.clone()),
            Head::Softmax => Output::Probs(softmax(raw)),
            Head::Gaussian => {
                let d = raw.len() / 2;
                Output::Gaussian(GaussianParams {
                    mean: raw[..d].to_vec(),
                    log_std: raw[d..].iter().map(|&l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
                })
            }
        };
        Ok(Trace { activations, pre, output })
    }

    /// Parameter gradients given the gradient of a scalar with respect to
    /// the head output (probabilities, `[mean, log_std]`, or the raw vector).
    pub fn backward(&self, trace: &Trace, grad_output: &[f64]) -> Result<Grads, ApproxError> {
        let raw_grad = self.head_to_raw(trace, grad_output)?;
        self.backward_raw(trace, &raw_grad)
    }

    fn head_to_raw(&self, trace: &Trace, grad_output: &[f64]) -> Result<Vec<f64>, ApproxError> {
        let n = self.raw_output_dim();
        if grad_output.len() != n {
            return Err(ApproxError::DimensionMismatch { expected: n, got: grad_output.len() });
        }
        Ok(match &trace.output {
            Output::Vector(_) => grad_output.to_vec(),
            Output::Probs(p) => softmax_backward(p, grad_output),
            Output::Gaussian(_) => {
                let d = n / 2;
                let raw = trace.raw();
                let mut g = grad_output.to_vec();
                for i in d..n {
                    if raw[i] < LOG_STD_MIN || raw[i] > LOG_STD_MAX {
                        g[i] = 0.0;
                    }
                }
                g
            }
        })
    }

    /// Parameter gradients given the gradient with respect to the raw
    /// (pre-head) output of the last layer.
    pub fn backward_raw(&self, trace: &Trace, grad_raw: &[f64]) -> Result<Grads, ApproxError> {
        let mut grads = Grads::zeros_like(self);
        self.accumulate_raw(trace, grad_raw, &mut grads, 1.0)?;
        Ok(grads)
    }

    /// [`Net::backward`] added into `acc` with weight `scale`.
    pub fn accumulate(&self, trace: &Trace, grad_output: &[f64], acc: &mut Grads, scale: f64) -> Result<(), ApproxError> {
        let raw_grad = self.head_to_raw(trace, grad_output)?;
        self.accumulate_raw(trace, &raw_grad, acc, scale)
    }

    /// [`Net::backward_raw`] added into `acc` with weight `scale`.
    pub fn accumulate_raw(&self, trace: &Trace, grad_raw: &[f64], acc: &mut Grads, scale: f64) -> Result<(), ApproxError> {
        let n = self.raw_output_dim();
        if grad_raw.len() != n || trace.pre.len() != self.layers.len() {
            return Err(ApproxError::DimensionMismatch { expected: n, got: grad_raw.len() });
        }
        let mut delta: Vec<f64> = grad_raw.iter().map(|g| g * scale).collect();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.activations[i];
            let g = &mut acc.layers[i];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
                if d != 0.0 {
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(w, &a)| *w += d * a);
                }
            }
            if i == 0 {
                break;
            }
            let mut next = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    next.iter_mut().zip(row).for_each(|(n, &w)| *n += d * w);
                }
            }
            let act = self.hidden[i - 1];
            let z = &trace.pre[i - 1];
            for (j, v) in next.iter_mut().enumerate() {
                *v *= act.derivative(z[j], input[j]);
            }
            delta = next;
        }
        Ok(())
    }

    /// `params += scale * step`.
    pub fn apply_update(&mut self, step: &Grads, scale: f64) {
        for (l, g) in self.layers.iter_mut().zip(&step.layers) {
            l.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w += scale * d);
            l.bias.iter_mut().zip(&g.bias).for_each(|(b, d)| *b += scale * d);
        }
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// Chain rule through softmax: `g_z = p * (g_p - <g_p, p>)`.
pub fn softmax_backward(p: &Simplex, grad_probs: &[f64]) -> Vec<f64> {
    let dot: f64 = p.probs().iter().zip(grad_probs).map(|(a, b)| a * b).sum();
    p.probs()
        .iter()
        .zip(grad_probs)
        .map(|(&pi, &gi)| pi * (gi - dot))
        .collect()
}

/// Adaptive-moment optimizer. [`Adam::step`] descends the supplied
/// gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Net, lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Net, grads: &Grads) -> Result<(), ApproxError> {
        if !grads.is_finite() {
            return Err(ApproxError::NonFiniteGradient);
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let step = self.lr;
        let eps = self.eps;
        for ((layer, g), (m, v)) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()))
        {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= step * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// [`Adam`] over a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl FlatAdam {
    pub fn new(len: usize, lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        FlatAdam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), ApproxError> {
        if grads.len() != params.len() || grads.len() != self.m.len() {
            return Err(ApproxError::DimensionMismatch { expected: self.m.len(), got: grads.len() });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(ApproxError::NonFiniteGradient);
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Plain gradient descent step.
pub fn sgd_step(net: &mut Net, grads: &Grads, lr: f64) -> Result<(), ApproxError> {
    if !grads.is_finite() {
        return Err(ApproxError::NonFiniteGradient);
    }
    net.apply_update(grads, -lr);
    Ok(())
}

/// Reparameterized draw `a = mean + std * eps`, `eps ~ N(0, I)`.
pub fn gaussian_sample(params: &GaussianParams, rng: &mut Rng) -> Vec<f64> {
    let noise: Vec<f64> = (0..params.dim()).map(|_| StandardNormal.sample(rng)).collect();
    gaussian_sample_with_noise(params, &noise)
}

pub fn gaussian_sample_with_noise(params: &GaussianParams, noise: &[f64]) -> Vec<f64> {
    params
        .mean
        .iter()
        .zip(&params.log_std)
        .zip(noise)
        .map(|((m, l), e)| m + l.exp() * e)
        .collect()
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_prob(params: &GaussianParams, action: &[f64]) -> f64 {
    params
        .mean
        .iter()
        .zip(&params.log_std)
        .zip(action)
        .map(|((&m, &l), &a)| {
            let z = (a - m) / l.exp();
            -HALF_LN_2PI - l - 0.5 * z * z
        })
        .sum()
}

/// Gradient of [`gaussian_log_prob`] with respect to `[mean, log_std]`.
pub fn gaussian_log_prob_grad(params: &GaussianParams, action: &[f64]) -> Vec<f64> {
    let d = params.dim();
    let mut g = vec![0.0; 2 * d];
    for i in 0..d {
        let var = (2.0 * params.log_std[i]).exp();
        let diff = action[i] - params.mean[i];
        g[i] = diff / var;
        g[d + i] = diff * diff / var - 1.0;
    }
    g
}

/// `KL(p || q)` between diagonal Gaussians.
pub fn gaussian_kl(p: &GaussianParams, q: &GaussianParams) -> f64 {
    (0..p.dim())
        .map(|i| {
            let vp = (2.0 * p.log_std[i]).exp();
            let vq = (2.0 * q.log_std[i]).exp();
            let diff = p.mean[i] - q.mean[i];
            q.log_std[i] - p.log_std[i] + (vp + diff * diff) / (2.0 * vq) - 0.5
        })
        .sum()
}

/// Gradient of [`gaussian_kl`] with respect to `p`'s `[mean, log_std]`.
pub fn gaussian_kl_grad(p: &GaussianParams, q: &GaussianParams) -> Vec<f64> {
    let d = p.dim();
    let mut g = vec![0.0; 2 * d];
    for i in 0..d {
        let vp = (2.0 * p.log_std[i]).exp();
        let vq = (2.0 * q.log_std[i]).exp();
        g[i] = (p.mean[i] - q.mean[i]) / vq;
        g[d + i] = vp / vq - 1.0;
    }
    g
}

pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber`] with respect to the residual.
pub fn huber_grad(residual: f64, delta: f64) -> f64 {
    residual.clamp(-delta, delta)
}
