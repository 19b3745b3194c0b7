//! Small dense networks with hand-written reverse mode.
//!
//! Parameters live in one flat vector. For each layer `l` with fan-in `i` and
//! fan-out `o` the block is `o * i` weights in row-major order (row = output
//! unit) followed by `o` biases. Hidden layers use `tanh`; the output layer
//! uses the network's `output_activation`.

use std::io::{BufRead, Write};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cache does not match this network")]
    StaleCache,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    widths: Vec<usize>,
    params: Vec<f64>,
    output_activation: Activation,
}

/// Per-layer inputs and pre-activations recorded by `forward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    preacts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer(pub Vec<f64>);

impl GradientBuffer {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn zero(&mut self) {
        self.0.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl DenseNet {
    pub fn zeros(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        Self {
            widths: widths.to_vec(),
            params: vec![0.0; param_count(widths)],
            output_activation: Activation::Identity,
        }
    }

    /// Scaled-uniform initialisation, bound `sqrt(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(widths);
        let mut off = 0;
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            off += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Result<Self, NeuralError> {
        let expected = param_count(widths);
        if params.len() != expected {
            return Err(NeuralError::DimensionMismatch { expected, got: params.len() });
        }
        Ok(Self {
            widths: widths.to_vec(),
            params,
            output_activation: Activation::Identity,
        })
    }

    pub fn with_output_activation(mut self, act: Activation) -> Self {
        self.output_activation = act;
        self
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers() {
            self.output_activation
        } else {
            Activation::Tanh
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NeuralError> {
        if input.len() != self.input_dim() {
            return Err(NeuralError::DimensionMismatch { expected: self.input_dim(), got: input.len() });
        }
        let mut inputs = Vec::with_capacity(self.layers());
        let mut preacts = Vec::with_capacity(self.layers());
        let mut x = input.to_vec();
        let mut off = 0;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let weights = &self.params[off..off + n_in * n_out];
            let biases = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>() + biases[o]
                })
                .collect();
            let a = match self.activation(l) {
                Activation::Identity => z.clone(),
                Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
            };
            inputs.push(std::mem::replace(&mut x, a));
            preacts.push(z);
            off += n_in * n_out + n_out;
        }
        Ok((x, ForwardCache { inputs, preacts }))
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.forward(input).map(|(y, _)| y)
    }

    /// Gradient of a scalar loss whose output gradient is `output_grad`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<GradientBuffer, NeuralError> {
        let mut grad = GradientBuffer::zeros(self.num_params());
        self.backward_into(cache, output_grad, &mut grad.0)?;
        Ok(grad)
    }

    /// Accumulates the parameter gradient into `grad` and returns the
    /// gradient with respect to the network input.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grad: &mut [f64],
    ) -> Result<Vec<f64>, NeuralError> {
        if cache.inputs.len() != self.layers()
            || cache.inputs.iter().enumerate().any(|(l, x)| x.len() != self.widths[l])
            || grad.len() != self.num_params()
        {
            return Err(NeuralError::StaleCache);
        }
        if output_grad.len() != self.output_dim() {
            return Err(NeuralError::DimensionMismatch { expected: self.output_dim(), got: output_grad.len() });
        }
        let mut offsets = Vec::with_capacity(self.layers());
        let mut off = 0;
        for w in self.widths.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut upstream = output_grad.to_vec();
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let delta: Vec<f64> = match self.activation(l) {
                Activation::Identity => upstream,
                Activation::Tanh => upstream
                    .iter()
                    .zip(&cache.preacts[l])
                    .map(|(g, z)| {
                        let t = z.tanh();
                        g * (1.0 - t * t)
                    })
                    .collect(),
            };
            let off = offsets[l];
            let x = &cache.inputs[l];
            let (w_grad, rest) = grad[off..].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (g, xi) in w_grad[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
                rest[o] += d;
            }
            let weights = &self.params[off..off + n_in * n_out];
            let mut down = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (dn, w) in down.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *dn += d * w;
                    }
                }
            }
            upstream = down;
        }
        Ok(upstream)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Textual checkpoint: `key value` header lines, a `params <n>` line, then one
/// decimal parameter per line. Values use the shortest representation that
/// parses back to the same `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Vec<(String, String)>,
    pub params: Vec<f64>,
}

const CHECKPOINT_MAGIC: &str = "moppo-checkpoint v1";

impl Checkpoint {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{CHECKPOINT_MAGIC}")?;
        for (k, v) in &self.header {
            writeln!(out, "{k} {v}")?;
        }
        writeln!(out, "params {}", self.params.len())?;
        for p in &self.params {
            writeln!(out, "{p}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, NeuralError> {
        let bad = |m: String| NeuralError::Checkpoint(m);
        let mut lines = input.lines();
        let mut next = || -> Result<String, NeuralError> {
            lines
                .next()
                .ok_or_else(|| bad("unexpected end of file".into()))?
                .map_err(|e| bad(e.to_string()))
        };
        if next()?.trim() != CHECKPOINT_MAGIC {
            return Err(bad("missing header line".into()));
        }
        let mut header = Vec::new();
        let count = loop {
            let line = next()?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("malformed header line '{line}'")))?;
            if k == "params" {
                break v.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?;
            }
            header.push((k.to_string(), v.to_string()));
        };
        let params = (0..count)
            .map(|_| next()?.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { header, params })
    }
}
