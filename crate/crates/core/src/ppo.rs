//! PPO for one weight-conditioned policy.
//!
//! Advantages come from GAE on the scalarised reward `wᵀr` and scalarised
//! value `wᵀV(s; w)`; the critic regresses the per-objective λ-returns.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{Env, EnvError};
use crate::policy::{gaussian_log_prob, PolicyError, PolicyOptimizer, WeightConditionedPolicy};
use crate::weightspace::ScalarisationVector;
use crate::ObjectiveVector;

const HALF_LN_2PI_E: f64 = 1.418_938_533_204_672_7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PpoError {
    #[error("non-finite loss or gradient; update rolled back")]
    NaNDetected,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid PPO config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    /// Critic loss weight `c1`.
    pub value_coef: f64,
    /// Entropy bonus weight `c2`.
    pub entropy_coef: f64,
    /// Transitions per update, `D`.
    pub rollout_len: usize,
    /// Global gradient-norm clip; `0` disables it.
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 10,
            minibatch: 64,
            lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.0,
            rollout_len: 2500,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::InvalidConfig(m.to_string()));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.rollout_len == 0 {
            return bad("epochs, minibatch and rollout_len must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma must lie in (0, 1] and lambda in [0, 1]");
        }
        if !(self.lr > 0.0) || self.value_coef < 0.0 || self.entropy_coef < 0.0 || self.max_grad_norm < 0.0 {
            return bad("lr must be positive; coefficients and max_grad_norm non-negative");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden must list at least one positive width");
        }
        Ok(())
    }
}

/// When the conditioning vector is redrawn during collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resample {
    /// At every episode start.
    Episode,
    /// Whenever the collection step counter is a multiple of this.
    Steps(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSampler {
    Fixed(ScalarisationVector),
    /// Uniform over the pool. A one-element pool draws no randomness.
    Uniform(Vec<ScalarisationVector>),
    Cycle { pool: Vec<ScalarisationVector>, next: usize },
}

impl WeightSampler {
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> ScalarisationVector {
        match self {
            WeightSampler::Fixed(w) => w.clone(),
            WeightSampler::Uniform(pool) => {
                assert!(!pool.is_empty(), "empty sampling pool");
                if pool.len() == 1 {
                    pool[0].clone()
                } else {
                    pool[rng.random_range(0..pool.len())].clone()
                }
            }
            WeightSampler::Cycle { pool, next } => {
                let w = pool[*next % pool.len()].clone();
                *next = (*next + 1) % pool.len();
                w
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutEntry {
    pub state: Vec<f64>,
    /// Unclipped sampled action.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: ObjectiveVector,
    pub value: Vec<f64>,
    pub w: ScalarisationVector,
    pub terminal: bool,
    /// `V(s'; w)` when the trajectory is cut here without terminating (end of
    /// buffer or a change of `w`).
    pub bootstrap: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    capacity: usize,
    entries: Vec<RolloutEntry>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: Vec::with_capacity(capacity) }
    }

    pub fn push(&mut self, e: RolloutEntry) {
        assert!(self.entries.len() < self.capacity, "rollout buffer full");
        self.entries.push(e);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[RolloutEntry] {
        &self.entries
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Scalarised return of every episode that completed inside the buffer;
    /// the trailing partial episode counts only if nothing completed.
    pub fn episode_returns(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut acc = 0.0;
        for e in &self.entries {
            acc += e.w.dot(e.reward.as_slice());
            if e.terminal {
                out.push(acc);
                acc = 0.0;
            }
        }
        if out.is_empty() && !self.entries.is_empty() {
            out.push(acc);
        }
        out
    }
}

/// Fills a buffer with exactly `len` transitions, starting a fresh episode.
pub fn collect_rollouts<R: Rng + ?Sized>(
    policy: &WeightConditionedPolicy,
    env: &mut Env,
    sampler: &mut WeightSampler,
    resample: Resample,
    len: usize,
    rng: &mut R,
) -> Result<RolloutBuffer, PpoError> {
    let mut buf = RolloutBuffer::new(len);
    let mut state = env.reset(0);
    let mut w = sampler.sample(rng);
    let redraw_at = |t: usize, episode_start: bool| match resample {
        Resample::Episode => episode_start,
        Resample::Steps(rf) => t.is_multiple_of(rf.max(1)),
    };
    for t in 0..len {
        if t > 0 && redraw_at(t, buf.entries.last().is_some_and(|e| e.terminal)) {
            w = sampler.sample(rng);
        }
        let fwd = policy.forward(&state, &w)?;
        let std = policy.std();
        let action: Vec<f64> = fwd
            .mean
            .iter()
            .zip(&std)
            .map(|(mu, s)| mu + s * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let log_prob = gaussian_log_prob(&action, &fwd.mean, policy.log_std());
        let tr = env.step(&action)?;
        let cut = t + 1 == len || matches!(resample, Resample::Steps(rf) if (t + 1) % rf.max(1) == 0);
        let bootstrap = if !tr.terminal && cut {
            Some(policy.forward(&tr.next_state, &w)?.value)
        } else {
            None
        };
        buf.push(RolloutEntry {
            state: std::mem::take(&mut state),
            action,
            log_prob,
            reward: tr.reward,
            value: fwd.value,
            w: w.clone(),
            terminal: tr.terminal,
            bootstrap,
        });
        state = if tr.terminal { env.reset(0) } else { tr.next_state };
    }
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaeOutput {
    /// Scalar advantages before normalisation.
    pub advantages: Vec<f64>,
    /// Per-objective λ-returns, the critic targets.
    pub returns: Vec<ObjectiveVector>,
}

pub fn compute_gae(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> GaeOutput {
    let n = buffer.len();
    let entries = buffer.entries();
    let m = entries.first().map_or(0, |e| e.value.len());
    let mut advantages = vec![0.0; n];
    let mut returns = vec![ObjectiveVector::zeros(m); n];
    let mut next_adv = 0.0;
    let mut next_vec_adv = vec![0.0; m];
    for t in (0..n).rev() {
        let e = &entries[t];
        let (next_value, chained): (Option<&[f64]>, bool) = if e.terminal {
            (None, false)
        } else if let Some(b) = &e.bootstrap {
            (Some(b), false)
        } else if t + 1 < n {
            (Some(&entries[t + 1].value), true)
        } else {
            (None, false)
        };
        let mut vec_adv = vec![0.0; m];
        for j in 0..m {
            let nv = next_value.map_or(0.0, |v| v[j]);
            let delta = e.reward.as_slice()[j] + gamma * nv - e.value[j];
            vec_adv[j] = delta + if chained { gamma * lambda * next_vec_adv[j] } else { 0.0 };
            returns[t].as_mut_slice()[j] = vec_adv[j] + e.value[j];
        }
        let r_s = e.w.dot(e.reward.as_slice());
        let v_s = e.w.dot(&e.value);
        let nv_s = next_value.map_or(0.0, |v| e.w.dot(v));
        let delta = r_s + gamma * nv_s - v_s;
        advantages[t] = delta + if chained { gamma * lambda * next_adv } else { 0.0 };
        next_adv = advantages[t];
        next_vec_adv = vec_adv;
    }
    GaeOutput { advantages, returns }
}

/// Zero mean, unit standard deviation (population) over the buffer.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

/// Per-sample clipped surrogate `min(r·A, clip(r, 1-ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub samples: usize,
}

/// Gradient of `actor + c1·critic − c2·entropy`, averaged over `indices`.
pub fn minibatch_gradient(
    policy: &WeightConditionedPolicy,
    buffer: &RolloutBuffer,
    indices: &[usize],
    advantages: &[f64],
    returns: &[ObjectiveVector],
    cfg: &PpoConfig,
) -> Result<(crate::policy::PolicyGrad, BatchStats), PpoError> {
    let mut grad = policy.zeros_grad();
    let mut stats = BatchStats { samples: indices.len(), ..Default::default() };
    let b = indices.len() as f64;
    let m = policy.num_objectives() as f64;
    let log_std = policy.log_std();
    let var: Vec<f64> = log_std.iter().map(|l| (2.0 * l).exp()).collect();
    let entropy: f64 = log_std.iter().map(|l| l + HALF_LN_2PI_E).sum();
    for &i in indices {
        let e = &buffer.entries()[i];
        let fwd = policy.forward(&e.state, &e.w)?;
        let logp = gaussian_log_prob(&e.action, &fwd.mean, log_std);
        let ratio = (logp - e.log_prob).exp();
        let adv = advantages[i];
        let unclipped = ratio * adv;
        let surrogate = clipped_surrogate(ratio, adv, cfg.clip_eps);
        stats.actor_loss -= surrogate / b;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            stats.clip_fraction += 1.0 / b;
        }
        // d(actor_loss)/d(logp); zero where the clipped branch is the minimum
        let g_logp = if surrogate < unclipped { 0.0 } else { -ratio * adv };
        let d_mean: Vec<f64> = e
            .action
            .iter()
            .zip(&fwd.mean)
            .zip(&var)
            .map(|((a, mu), v)| g_logp * (a - mu) / v / b)
            .collect();
        let d_log_std: Vec<f64> = e
            .action
            .iter()
            .zip(&fwd.mean)
            .zip(&var)
            .map(|((a, mu), v)| (g_logp * ((a - mu) * (a - mu) / v - 1.0) - cfg.entropy_coef) / b)
            .collect();
        let target = returns[i].as_slice();
        let mut sq = 0.0;
        let d_value: Vec<f64> = fwd
            .value
            .iter()
            .zip(target)
            .map(|(v, r)| {
                sq += (v - r) * (v - r);
                cfg.value_coef * 2.0 * (v - r) / m / b
            })
            .collect();
        stats.critic_loss += sq / m / b;
        policy.backward(&fwd, &d_mean, &d_value, &d_log_std, &mut grad)?;
    }
    stats.entropy = entropy;
    Ok((grad, stats))
}

/// Mean squared critic error over the whole buffer.
pub fn critic_loss(
    policy: &WeightConditionedPolicy,
    buffer: &RolloutBuffer,
    returns: &[ObjectiveVector],
) -> Result<f64, PpoError> {
    let m = policy.num_objectives() as f64;
    let mut total = 0.0;
    for (e, r) in buffer.entries().iter().zip(returns) {
        let v = policy.forward(&e.state, &e.w)?.value;
        total += v.iter().zip(r.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / m;
    }
    Ok(total / buffer.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// `epochs` passes of shuffled minibatch Adam steps. On a non-finite loss or
/// gradient the policy and optimiser are restored and `NaNDetected` returned.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut WeightConditionedPolicy,
    opt: &mut PolicyOptimizer,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    returns: &[ObjectiveVector],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, PpoError> {
    assert_eq!(advantages.len(), buffer.len());
    assert_eq!(returns.len(), buffer.len());
    let snapshot = (policy.clone(), opt.clone());
    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let result = (|| {
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(cfg.minibatch) {
                let (mut grad, b) = minibatch_gradient(policy, buffer, chunk, advantages, returns, cfg)?;
                if !grad.is_finite() || !b.actor_loss.is_finite() || !b.critic_loss.is_finite() {
                    return Err(PpoError::NaNDetected);
                }
                if cfg.max_grad_norm > 0.0 {
                    let norm = grad.norm();
                    if norm > cfg.max_grad_norm {
                        grad.scale(cfg.max_grad_norm / norm);
                    }
                }
                policy.apply_adam(&grad, opt, cfg.lr);
                stats.actor_loss += b.actor_loss;
                stats.critic_loss += b.critic_loss;
                stats.entropy += b.entropy;
                stats.clip_fraction += b.clip_fraction;
                stats.minibatches += 1;
            }
        }
        if !policy.is_finite() {
            return Err(PpoError::NaNDetected);
        }
        Ok(())
    })();
    if let Err(e) = result {
        *policy = snapshot.0;
        *opt = snapshot.1;
        return Err(e);
    }
    let n = stats.minibatches.max(1) as f64;
    stats.actor_loss /= n;
    stats.critic_loss /= n;
    stats.entropy /= n;
    stats.clip_fraction /= n;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IterationStats {
    pub mean_scalarised_return: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub clip_fraction: f64,
    /// The update was rolled back after a non-finite value.
    pub aborted: bool,
}

/// One collect / advantage / update cycle.
#[allow(clippy::too_many_arguments)]
pub fn train_iteration<R: Rng + ?Sized>(
    policy: &mut WeightConditionedPolicy,
    opt: &mut PolicyOptimizer,
    env: &mut Env,
    sampler: &mut WeightSampler,
    resample: Resample,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<IterationStats, PpoError> {
    let buffer = collect_rollouts(policy, env, sampler, resample, cfg.rollout_len, rng)?;
    let returns = buffer.episode_returns();
    let mean_ret = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
    let GaeOutput { mut advantages, returns } = compute_gae(&buffer, cfg.gamma, cfg.gae_lambda);
    normalize_advantages(&mut advantages);
    match ppo_update(policy, opt, &buffer, &advantages, &returns, cfg, rng) {
        Ok(u) => Ok(IterationStats {
            mean_scalarised_return: mean_ret,
            actor_loss: u.actor_loss,
            critic_loss: u.critic_loss,
            clip_fraction: u.clip_fraction,
            aborted: false,
        }),
        Err(PpoError::NaNDetected) => Ok(IterationStats {
            mean_scalarised_return: mean_ret,
            aborted: true,
            ..Default::default()
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w(x: &[f64]) -> ScalarisationVector {
        ScalarisationVector::new(x.to_vec()).unwrap()
    }

    fn entry(reward: [f64; 2], value: [f64; 2], terminal: bool, bootstrap: Option<[f64; 2]>) -> RolloutEntry {
        RolloutEntry {
            state: vec![0.0],
            action: vec![0.0],
            log_prob: 0.0,
            reward: ObjectiveVector::new(reward.to_vec()),
            value: value.to_vec(),
            w: w(&[1.0, 0.0]),
            terminal,
            bootstrap: bootstrap.map(|b| b.to_vec()),
        }
    }

    fn small_policy(env: EnvKind, seed: u64) -> WeightConditionedPolicy {
        let s = env.spec();
        WeightConditionedPolicy::new(s.state_dim, s.action_dim, s.m, &[16, 16], &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn one_step_terminal_gae() {
        let mut buf = RolloutBuffer::new(1);
        buf.push(entry([1.0, 5.0], [0.0, 0.0], true, None));
        let out = compute_gae(&buf, 0.99, 0.95);
        assert_eq!(out.advantages, vec![1.0]);
        assert_eq!(out.returns[0].as_slice(), &[1.0, 5.0]);
    }

    #[test]
    fn zero_rewards_zero_values() {
        let mut buf = RolloutBuffer::new(2);
        buf.push(entry([0.0, 0.0], [0.0, 0.0], false, None));
        buf.push(entry([0.0, 0.0], [0.0, 0.0], true, None));
        assert_eq!(compute_gae(&buf, 0.99, 0.95).advantages, vec![0.0, 0.0]);
    }

    #[test]
    fn three_step_hand_recursion() {
        // delta = 1 + 0.9 * 0.5 - 0.5 = 0.95 at every step
        // A3 = 0.95, A2 = 0.95 + 0.45 * A3, A1 = 0.95 + 0.45 * A2
        let mut buf = RolloutBuffer::new(3);
        buf.push(entry([1.0, 0.0], [0.5, 0.0], false, None));
        buf.push(entry([1.0, 0.0], [0.5, 0.0], false, None));
        buf.push(entry([1.0, 0.0], [0.5, 0.0], false, Some([0.5, 0.0])));
        let out = compute_gae(&buf, 0.9, 0.5);
        let expected = [1.569875, 1.3775, 0.95];
        for (a, e) in out.advantages.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
        assert!((out.returns[2].as_slice()[0] - 1.45).abs() < 1e-12);
    }

    #[test]
    fn weight_change_cuts_the_trace() {
        let mut buf = RolloutBuffer::new(2);
        buf.push(entry([1.0, 0.0], [0.0, 0.0], false, Some([2.0, 0.0])));
        let mut second = entry([1.0, 0.0], [0.0, 0.0], true, None);
        second.w = w(&[0.0, 1.0]);
        buf.push(second);
        let out = compute_gae(&buf, 0.5, 1.0);
        assert_eq!(out.advantages, vec![1.0 + 0.5 * 2.0, 0.0]);
    }

    #[test]
    fn normalisation() {
        let mut a = vec![1.0, 2.0, 3.0, 4.0];
        normalize_advantages(&mut a);
        let mean: f64 = a.iter().sum::<f64>() / 4.0;
        let var: f64 = a.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn clip_arithmetic() {
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) - (-0.8)).abs() < 1e-15);
        for &r in &[0.1, 0.8, 1.0, 1.3, 3.0] {
            for &a in &[-2.0, -0.5, 0.0, 0.7, 1.9] {
                assert!(clipped_surrogate(r, a, 0.2) <= r * a + 1e-15);
            }
        }
    }

    #[test]
    fn rollout_capacity_equals_one_episode() {
        let p = small_policy(EnvKind::PointMass2, 0);
        let mut env = EnvKind::PointMass2.make();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut sampler = WeightSampler::Fixed(w(&[0.5, 0.5]));
        let buf = collect_rollouts(&p, &mut env, &mut sampler, Resample::Episode, 50, &mut rng).unwrap();
        assert_eq!(buf.len(), 50);
        assert_eq!(buf.entries().iter().filter(|e| e.terminal).count(), 1);
        assert!(buf.entries()[49].terminal);
        assert!(buf.entries().iter().all(|e| e.w == w(&[0.5, 0.5])));
    }

    #[test]
    fn resample_every_rf_steps() {
        let p = small_policy(EnvKind::PointMass2, 0);
        let mut env = EnvKind::PointMass2.make();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool = vec![w(&[0.2, 0.8]), w(&[0.6, 0.4])];
        let mut sampler = WeightSampler::Uniform(pool.clone());
        let buf = collect_rollouts(&p, &mut env, &mut sampler, Resample::Steps(25), 50, &mut rng).unwrap();
        let mut distinct: Vec<&ScalarisationVector> = Vec::new();
        for (t, e) in buf.entries().iter().enumerate() {
            if t % 25 != 0 {
                assert_eq!(e.w, buf.entries()[t - 1].w);
                assert!(buf.entries()[t - 1].bootstrap.is_none());
            }
            if !distinct.contains(&&e.w) {
                distinct.push(&e.w);
            }
        }
        assert!(distinct.len() <= 2);
        assert!(buf.entries()[24].bootstrap.is_some());
    }

    #[test]
    fn ratio_is_one_at_old_policy() {
        let p = small_policy(EnvKind::PointMass2, 3);
        let mut env = EnvKind::PointMass2.make();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sampler = WeightSampler::Fixed(w(&[0.3, 0.7]));
        let buf = collect_rollouts(&p, &mut env, &mut sampler, Resample::Episode, 100, &mut rng).unwrap();
        for e in buf.entries() {
            let lp = p.log_prob(&e.state, &e.w, &e.action).unwrap();
            assert!(((lp - e.log_prob).exp() - 1.0).abs() < 1e-10);
        }
    }

    /// At θ = θ_old the clipped objective's gradient is the vanilla policy
    /// gradient; checked against finite differences of mean(A · log π).
    #[test]
    fn ppo_gradient_equals_vanilla_pg_at_old_policy() {
        let p = small_policy(EnvKind::PointMass2, 4);
        let mut env = EnvKind::PointMass2.make();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sampler = WeightSampler::Fixed(w(&[0.5, 0.5]));
        let buf = collect_rollouts(&p, &mut env, &mut sampler, Resample::Episode, 20, &mut rng).unwrap();
        let adv: Vec<f64> = (0..20).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let returns = vec![ObjectiveVector::zeros(2); 20];
        let cfg = PpoConfig { value_coef: 0.0, ..Default::default() };
        let idx: Vec<usize> = (0..20).collect();
        let (grad, stats) = minibatch_gradient(&p, &buf, &idx, &adv, &returns, &cfg).unwrap();
        assert_eq!(stats.clip_fraction, 0.0);
        let analytic: Vec<f64> = grad.iter().copied().collect();
        let objective = |q: &WeightConditionedPolicy| -> f64 {
            -buf.entries()
                .iter()
                .zip(&adv)
                .map(|(e, a)| a * q.log_prob(&e.state, &e.w, &e.action).unwrap())
                .sum::<f64>()
                / 20.0
        };
        let base = p.flat_params();
        let mut q = p.clone();
        for i in (0..base.len()).step_by(5) {
            let mut x = base.clone();
            x[i] += 1e-5;
            q.set_flat_params(&x).unwrap();
            let up = objective(&q);
            x[i] -= 2e-5;
            q.set_flat_params(&x).unwrap();
            let down = objective(&q);
            let num = (up - down) / 2e-5;
            assert!((analytic[i] - num).abs() <= 1e-4 * analytic[i].abs().max(num.abs()).max(1e-4), "param {i}: {} vs {num}", analytic[i]);
        }
    }

    #[test]
    fn critic_loss_decreases_on_frozen_buffer() {
        let mut p = small_policy(EnvKind::PointMass2, 6);
        let mut opt = p.optimizer();
        let mut env = EnvKind::PointMass2.make();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut sampler = WeightSampler::Fixed(w(&[0.5, 0.5]));
        let buf = collect_rollouts(&p, &mut env, &mut sampler, Resample::Episode, 200, &mut rng).unwrap();
        let out = compute_gae(&buf, 0.99, 0.95);
        let zero_adv = vec![0.0; buf.len()];
        let cfg = PpoConfig { epochs: 1, lr: 1e-3, ..Default::default() };
        let mut prev = critic_loss(&p, &buf, &out.returns).unwrap();
        for _ in 0..10 {
            ppo_update(&mut p, &mut opt, &buf, &zero_adv, &out.returns, &cfg, &mut rng).unwrap();
            let now = critic_loss(&p, &buf, &out.returns).unwrap();
            assert!(now < prev, "{now} >= {prev}");
            prev = now;
        }
    }

    #[test]
    fn nan_rolls_back() {
        let mut p = small_policy(EnvKind::ConcaveBandit, 2);
        let before = p.clone();
        let mut opt = p.optimizer();
        let mut env = EnvKind::ConcaveBandit.make();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut sampler = WeightSampler::Fixed(w(&[0.5, 0.5]));
        let buf = collect_rollouts(&p, &mut env, &mut sampler, Resample::Episode, 8, &mut rng).unwrap();
        let mut adv = vec![1.0; 8];
        adv[3] = f64::NAN;
        let returns = vec![ObjectiveVector::zeros(2); 8];
        let err = ppo_update(&mut p, &mut opt, &buf, &adv, &returns, &PpoConfig::default(), &mut rng).unwrap_err();
        assert_eq!(err, PpoError::NaNDetected);
        assert_eq!(p, before);
        assert_eq!(opt, before.optimizer());
    }

    #[test]
    fn bandit_fixed_axis_weight_converges() {
        let mut p = small_policy(EnvKind::ConcaveBandit, 0);
        let mut opt = p.optimizer();
        let mut env = EnvKind::ConcaveBandit.make();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let wv = w(&[1.0, 0.0]);
        let mut sampler = WeightSampler::Fixed(wv.clone());
        let cfg = PpoConfig { rollout_len: 64, minibatch: 32, epochs: 5, ..Default::default() };
        for _ in 0..200 {
            train_iteration(&mut p, &mut opt, &mut env, &mut sampler, Resample::Episode, &cfg, &mut rng).unwrap();
        }
        let a = p.mean_action(&[0.0], &wv).unwrap()[0].clamp(-1.0, 1.0);
        let ret = crate::envs::bandit_angle(a).cos();
        assert!(ret >= 0.95, "scalarised return {ret}");
    }

    #[test]
    fn uniform_single_pool_draws_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut twin = rng.clone();
        let mut s = WeightSampler::Uniform(vec![w(&[0.5, 0.5])]);
        s.sample(&mut rng);
        assert_eq!(rng.random::<u64>(), twin.random::<u64>());
    }
}
