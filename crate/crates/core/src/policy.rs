//! Scalarisation-vector-conditioned actor-critic.
//!
//! `[state ‖ w]` feeds a shared tanh trunk; `w` is concatenated again onto the
//! trunk output (the residual connection) before the Gaussian actor head and
//! the vector-valued critic head (one output per objective).

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::neural::{adam_step, Activation, AdamState, Checkpoint, DenseNet, ForwardCache, NeuralError};
use crate::weightspace::ScalarisationVector;
use crate::ObjectiveVector;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

pub fn scalarise(v: &ObjectiveVector, w: &ScalarisationVector) -> Result<f64, PolicyError> {
    if v.dim() != w.dim() {
        return Err(PolicyError::DimensionMismatch { expected: w.dim(), got: v.dim() });
    }
    Ok(w.dot(v.as_slice()))
}

pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, mu), ls)| {
            let z = (a - mu) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightConditionedPolicy {
    state_dim: usize,
    action_dim: usize,
    m: usize,
    trunk: DenseNet,
    actor: DenseNet,
    critic: DenseNet,
    log_std: Vec<f64>,
}

/// Everything `backward` needs from one forward pass.
#[derive(Debug, Clone)]
pub struct PolicyForward {
    trunk_cache: ForwardCache,
    actor_cache: ForwardCache,
    critic_cache: ForwardCache,
    pub mean: Vec<f64>,
    pub value: Vec<f64>,
}

/// Gradient with the same shape as the policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrad {
    pub trunk: Vec<f64>,
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl PolicyGrad {
    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.iter_mut().for_each(|g| *g *= s);
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.trunk.iter().chain(&self.actor).chain(&self.critic).chain(&self.log_std)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.trunk
            .iter_mut()
            .chain(self.actor.iter_mut())
            .chain(self.critic.iter_mut())
            .chain(self.log_std.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }
}

/// Adam moments for every parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOptimizer {
    trunk: AdamState,
    actor: AdamState,
    critic: AdamState,
    log_std: AdamState,
}

impl WeightConditionedPolicy {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, m: usize, hidden: &[usize], rng: &mut R) -> Self {
        assert!(!hidden.is_empty(), "trunk needs at least one hidden layer");
        let mut trunk_widths = vec![state_dim + m];
        trunk_widths.extend_from_slice(hidden);
        let top = *hidden.last().unwrap();
        let trunk = DenseNet::init(&trunk_widths, rng).with_output_activation(Activation::Tanh);
        let actor = DenseNet::init(&[top + m, action_dim], rng);
        let critic = DenseNet::init(&[top + m, m], rng);
        Self {
            state_dim,
            action_dim,
            m,
            trunk,
            actor,
            critic,
            log_std: vec![0.0; action_dim],
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn num_objectives(&self) -> usize {
        self.m
    }

    pub fn hidden(&self) -> &[usize] {
        &self.trunk.widths()[1..]
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn set_log_std(&mut self, log_std: &[f64]) {
        assert_eq!(log_std.len(), self.action_dim);
        self.log_std = log_std.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    pub fn zeros_grad(&self) -> PolicyGrad {
        PolicyGrad {
            trunk: vec![0.0; self.trunk.num_params()],
            actor: vec![0.0; self.actor.num_params()],
            critic: vec![0.0; self.critic.num_params()],
            log_std: vec![0.0; self.action_dim],
        }
    }

    pub fn optimizer(&self) -> PolicyOptimizer {
        PolicyOptimizer {
            trunk: AdamState::new(self.trunk.num_params()),
            actor: AdamState::new(self.actor.num_params()),
            critic: AdamState::new(self.critic.num_params()),
            log_std: AdamState::new(self.action_dim),
        }
    }

    pub fn apply_adam(&mut self, grad: &PolicyGrad, opt: &mut PolicyOptimizer, lr: f64) {
        adam_step(self.trunk.params_mut(), &grad.trunk, &mut opt.trunk, lr);
        adam_step(self.actor.params_mut(), &grad.actor, &mut opt.actor, lr);
        adam_step(self.critic.params_mut(), &grad.critic, &mut opt.critic, lr);
        adam_step(&mut self.log_std, &grad.log_std, &mut opt.log_std, lr);
        for l in &mut self.log_std {
            *l = l.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    fn check(&self, state: &[f64], w: &ScalarisationVector) -> Result<(), PolicyError> {
        if state.len() != self.state_dim {
            return Err(PolicyError::DimensionMismatch { expected: self.state_dim, got: state.len() });
        }
        if w.dim() != self.m {
            return Err(PolicyError::DimensionMismatch { expected: self.m, got: w.dim() });
        }
        Ok(())
    }

    pub fn forward(&self, state: &[f64], w: &ScalarisationVector) -> Result<PolicyForward, PolicyError> {
        self.check(state, w)?;
        let mut input = Vec::with_capacity(self.state_dim + self.m);
        input.extend_from_slice(state);
        input.extend_from_slice(w.as_slice());
        let (mut head_in, trunk_cache) = self.trunk.forward(&input)?;
        head_in.extend_from_slice(w.as_slice());
        let (mean, actor_cache) = self.actor.forward(&head_in)?;
        let (value, critic_cache) = self.critic.forward(&head_in)?;
        Ok(PolicyForward { trunk_cache, actor_cache, critic_cache, mean, value })
    }

    /// Accumulates into `grad` the gradient of a loss with the given partials
    /// with respect to the action mean, the critic output and `log_std`.
    pub fn backward(
        &self,
        fwd: &PolicyForward,
        d_mean: &[f64],
        d_value: &[f64],
        d_log_std: &[f64],
        grad: &mut PolicyGrad,
    ) -> Result<(), PolicyError> {
        let top = self.trunk.output_dim();
        let da = self.actor.backward_into(&fwd.actor_cache, d_mean, &mut grad.actor)?;
        let dc = self.critic.backward_into(&fwd.critic_cache, d_value, &mut grad.critic)?;
        let d_trunk: Vec<f64> = da[..top].iter().zip(&dc[..top]).map(|(a, c)| a + c).collect();
        self.trunk.backward_into(&fwd.trunk_cache, &d_trunk, &mut grad.trunk)?;
        for (g, d) in grad.log_std.iter_mut().zip(d_log_std) {
            *g += d;
        }
        Ok(())
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        w: &ScalarisationVector,
        rng: &mut R,
    ) -> Result<ActionSample, PolicyError> {
        let fwd = self.forward(state, w)?;
        let std = self.std();
        let action: Vec<f64> = fwd
            .mean
            .iter()
            .zip(&std)
            .map(|(mu, s)| {
                let eps: f64 = rng.sample(StandardNormal);
                mu + s * eps
            })
            .collect();
        let log_prob = gaussian_log_prob(&action, &fwd.mean, &self.log_std);
        Ok(ActionSample { action, log_prob, mean: fwd.mean, std })
    }

    /// Action mean, used for deterministic evaluation.
    pub fn mean_action(&self, state: &[f64], w: &ScalarisationVector) -> Result<Vec<f64>, PolicyError> {
        Ok(self.forward(state, w)?.mean)
    }

    pub fn value(&self, state: &[f64], w: &ScalarisationVector) -> Result<ObjectiveVector, PolicyError> {
        Ok(ObjectiveVector::new(self.forward(state, w)?.value))
    }

    pub fn log_prob(&self, state: &[f64], w: &ScalarisationVector, action: &[f64]) -> Result<f64, PolicyError> {
        let fwd = self.forward(state, w)?;
        Ok(gaussian_log_prob(action, &fwd.mean, &self.log_std))
    }

    /// Zeroes the head weights reading the residual copy of `w`, leaving only
    /// the input-concatenation pathway.
    pub fn zero_residual_weights(&mut self) {
        let top = self.trunk.output_dim();
        let n_in = top + self.m;
        for head in [&mut self.actor, &mut self.critic] {
            let n_out = head.output_dim();
            let p = head.params_mut();
            for o in 0..n_out {
                for j in top..n_in {
                    p[o * n_in + j] = 0.0;
                }
            }
        }
    }

    /// Zeroes the trunk weights reading `w` from the input layer, leaving
    /// only the residual pathway.
    pub fn zero_input_weight_columns(&mut self) {
        let n_in = self.state_dim + self.m;
        let n_out = self.trunk.widths()[1];
        let p = self.trunk.params_mut();
        for o in 0..n_out {
            for j in self.state_dim..n_in {
                p[o * n_in + j] = 0.0;
            }
        }
    }

    pub fn zero_critic(&mut self) {
        self.critic.params_mut().iter_mut().for_each(|p| *p = 0.0);
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.trunk.params());
        out.extend_from_slice(self.actor.params());
        out.extend_from_slice(self.critic.params());
        out.extend_from_slice(&self.log_std);
        out
    }

    pub fn num_params(&self) -> usize {
        self.trunk.num_params() + self.actor.num_params() + self.critic.num_params() + self.action_dim
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), PolicyError> {
        if flat.len() != self.num_params() {
            return Err(PolicyError::DimensionMismatch { expected: self.num_params(), got: flat.len() });
        }
        let (t, rest) = flat.split_at(self.trunk.num_params());
        let (a, rest) = rest.split_at(self.actor.num_params());
        let (c, l) = rest.split_at(self.critic.num_params());
        self.trunk.params_mut().copy_from_slice(t);
        self.actor.params_mut().copy_from_slice(a);
        self.critic.params_mut().copy_from_slice(c);
        self.log_std.copy_from_slice(l);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.flat_params().iter().all(|p| p.is_finite())
    }

    /// Writes a checkpoint. `extra` header entries (seed, sub-space, stage)
    /// are appended after the architecture description.
    pub fn write_checkpoint<W: Write>(&self, out: &mut W, extra: &[(&str, String)]) -> std::io::Result<()> {
        let hidden: Vec<String> = self.hidden().iter().map(|h| h.to_string()).collect();
        let mut header = vec![
            ("kind".to_string(), "policy".to_string()),
            ("state_dim".to_string(), self.state_dim.to_string()),
            ("action_dim".to_string(), self.action_dim.to_string()),
            ("m".to_string(), self.m.to_string()),
            ("hidden".to_string(), hidden.join(",")),
        ];
        header.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
        Checkpoint { header, params: self.flat_params() }.write(out)
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<(Self, Checkpoint), PolicyError> {
        let ck = Checkpoint::read(input)?;
        let field = |k: &str| -> Result<usize, PolicyError> {
            ck.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| NeuralError::Checkpoint(format!("missing or invalid '{k}'")).into())
        };
        if ck.get("kind") != Some("policy") {
            return Err(NeuralError::Checkpoint("not a policy checkpoint".into()).into());
        }
        let (state_dim, action_dim, m) = (field("state_dim")?, field("action_dim")?, field("m")?);
        let hidden: Vec<usize> = ck
            .get("hidden")
            .unwrap_or("")
            .split(',')
            .map(|h| h.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| NeuralError::Checkpoint(format!("hidden: {e}")))?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut policy = Self::new(state_dim, action_dim, m, &hidden, &mut rng);
        policy.set_flat_params(&ck.params)?;
        Ok((policy, ck))
    }
}
