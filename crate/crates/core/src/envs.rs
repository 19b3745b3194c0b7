//! Multi-objective MDPs with trivial dynamics and the reward shapes of the
//! locomotion benchmarks (speed against energy, or speed along two axes
//! against energy).

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ObjectiveVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("episode finished; call reset before stepping again")]
    EpisodeFinished,
    #[error("action has {got} components, expected {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("unknown environment '{0}' (valid: concave-bandit, pointmass-2, pointmass-3)")]
    UnknownEnv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomdpSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    /// Number of objectives.
    pub m: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Action as proposed by the policy, before clipping.
    pub action: Vec<f64>,
    /// Action applied to the dynamics.
    pub applied_action: Vec<f64>,
    pub reward: ObjectiveVector,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    ConcaveBandit,
    #[serde(rename = "pointmass-2")]
    PointMass2,
    #[serde(rename = "pointmass-3")]
    PointMass3,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::ConcaveBandit, EnvKind::PointMass2, EnvKind::PointMass3];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::ConcaveBandit => "concave-bandit",
            EnvKind::PointMass2 => "pointmass-2",
            EnvKind::PointMass3 => "pointmass-3",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            EnvKind::ConcaveBandit => "one-step bandit, reward (cos t, sin t) on the quarter circle; analytic CCS",
            EnvKind::PointMass2 => "1-D point mass, speed vs energy, horizon 50",
            EnvKind::PointMass3 => "2-D point mass, x speed vs y speed vs energy, horizon 50",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, EnvError> {
        EnvKind::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| EnvError::UnknownEnv(name.to_string()))
    }

    pub fn spec(self) -> MomdpSpec {
        match self {
            EnvKind::ConcaveBandit => MomdpSpec {
                state_dim: 1,
                action_dim: 1,
                m: 2,
                horizon: 1,
                gamma: 0.99,
                action_low: vec![-1.0],
                action_high: vec![1.0],
            },
            EnvKind::PointMass2 => MomdpSpec {
                state_dim: 2,
                action_dim: 1,
                m: 2,
                horizon: POINTMASS_HORIZON,
                gamma: 0.99,
                action_low: vec![-1.0],
                action_high: vec![1.0],
            },
            EnvKind::PointMass3 => MomdpSpec {
                state_dim: 4,
                action_dim: 2,
                m: 3,
                horizon: POINTMASS_HORIZON,
                gamma: 0.99,
                action_low: vec![-1.0, -1.0],
                action_high: vec![1.0, 1.0],
            },
        }
    }

    pub fn make(self) -> Env {
        Env::new(self)
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s)
    }
}

const POINTMASS_HORIZON: usize = 50;
const DT: f64 = 0.1;

/// Bandit angle for an action in `[-1, 1]`, mapped affinely onto `[0, pi/2]`.
pub fn bandit_angle(a: f64) -> f64 {
    (a + 1.0) * FRAC_PI_2 / 2.0
}

/// A running environment instance. Single-threaded; each worker owns its own.
#[derive(Debug, Clone)]
pub struct Env {
    kind: EnvKind,
    spec: MomdpSpec,
    state: Vec<f64>,
    t: usize,
    done: bool,
}

impl Env {
    pub fn new(kind: EnvKind) -> Self {
        let spec = kind.spec();
        Self {
            kind,
            state: vec![0.0; spec.state_dim],
            spec,
            t: 0,
            done: true,
        }
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn spec(&self) -> &MomdpSpec {
        &self.spec
    }

    /// Start states are fixed; the seed is accepted for interface symmetry.
    pub fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.state = vec![0.0; self.spec.state_dim];
        self.t = 0;
        self.done = false;
        self.state.clone()
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Transition, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        if action.len() != self.spec.action_dim {
            return Err(EnvError::ActionDimension {
                expected: self.spec.action_dim,
                got: action.len(),
            });
        }
        let applied: Vec<f64> = action
            .iter()
            .zip(self.spec.action_low.iter().zip(&self.spec.action_high))
            .map(|(&a, (&lo, &hi))| if a.is_nan() { 0.0 } else { a.clamp(lo, hi) })
            .collect();
        let (next, reward) = dynamics(self.kind, &self.state, &applied);
        self.t += 1;
        let terminal = self.t >= self.spec.horizon;
        let tr = Transition {
            state: std::mem::replace(&mut self.state, next.clone()),
            action: action.to_vec(),
            applied_action: applied,
            reward: ObjectiveVector::new(reward),
            next_state: next,
            terminal,
        };
        self.done = terminal;
        Ok(tr)
    }
}

/// Deterministic transition function on an already clipped action.
pub fn dynamics(kind: EnvKind, state: &[f64], a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    match kind {
        EnvKind::ConcaveBandit => {
            let theta = bandit_angle(a[0]);
            (vec![0.0], vec![theta.cos(), theta.sin()])
        }
        EnvKind::PointMass2 => {
            let (x, v) = (state[0], state[1]);
            let v1 = (v + DT * a[0]).clamp(-1.0, 1.0);
            let x1 = x + DT * v1;
            (vec![x1, v1], vec![v1, 0.3 - 0.15 * a[0] * a[0]])
        }
        EnvKind::PointMass3 => {
            let (x, y, vx, vy) = (state[0], state[1], state[2], state[3]);
            let vx1 = (vx + DT * a[0]).clamp(-1.0, 1.0);
            let vy1 = (vy + DT * a[1]).clamp(-1.0, 1.0);
            let next = vec![x + DT * vx1, y + DT * vy1, vx1, vy1];
            let energy = 1.0 - 0.5 * (a[0] * a[0] + a[1] * a[1]);
            (next, vec![vx1, vy1, energy])
        }
    }
}

/// Dense sample of the analytic CCS where one exists.
pub fn true_ccs(kind: EnvKind) -> Option<Vec<ObjectiveVector>> {
    match kind {
        EnvKind::ConcaveBandit => Some(
            (0..=1000)
                .map(|i| {
                    let theta = FRAC_PI_2 * i as f64 / 1000.0;
                    ObjectiveVector::new(vec![theta.cos(), theta.sin()])
                })
                .collect(),
        ),
        _ => None,
    }
}

/// Rollout trace rows: `step, state..., action..., r_1...r_m`.
pub fn write_trace_csv<W: Write>(out: &mut W, trace: &[Transition]) -> std::io::Result<()> {
    let Some(first) = trace.first() else {
        return Ok(());
    };
    let mut header = vec!["step".to_string()];
    header.extend((1..=first.state.len()).map(|i| format!("s{i}")));
    header.extend((1..=first.action.len()).map(|i| format!("a{i}")));
    header.extend((1..=first.reward.dim()).map(|i| format!("r{i}")));
    writeln!(out, "{}", header.join(","))?;
    for (t, tr) in trace.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(tr.state.iter().map(|x| x.to_string()));
        row.extend(tr.action.iter().map(|x| x.to_string()));
        row.extend(tr.reward.as_slice().iter().map(|x| x.to_string()));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::hypervolume;
    use crate::weightspace::generate_simplex_grid;

    #[test]
    fn resets() {
        assert_eq!(EnvKind::ConcaveBandit.make().reset(3), vec![0.0]);
        assert_eq!(EnvKind::PointMass2.make().reset(7), vec![0.0, 0.0]);
        assert_eq!(EnvKind::PointMass3.make().reset(7), vec![0.0; 4]);
    }

    #[test]
    fn bandit_step() {
        let mut env = EnvKind::ConcaveBandit.make();
        env.reset(0);
        let tr = env.step(&[-1.0]).unwrap();
        assert_eq!(tr.reward.as_slice(), &[1.0, 0.0]);
        assert!(tr.terminal);
        assert_eq!(env.step(&[0.0]), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn pointmass2_step() {
        let mut env = EnvKind::PointMass2.make();
        env.reset(0);
        let tr = env.step(&[1.0]).unwrap();
        assert!((tr.next_state[1] - 0.1).abs() < 1e-15);
        assert!((tr.next_state[0] - 0.01).abs() < 1e-15);
        assert!((tr.reward.as_slice()[0] - 0.1).abs() < 1e-15);
        assert!((tr.reward.as_slice()[1] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn pointmass3_zero_action() {
        let mut env = EnvKind::PointMass3.make();
        env.reset(0);
        let tr = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(tr.reward.as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn clipping_keeps_raw_action() {
        let mut env = EnvKind::PointMass2.make();
        env.reset(0);
        let tr = env.step(&[3.0]).unwrap();
        assert_eq!(tr.action, vec![3.0]);
        assert_eq!(tr.applied_action, vec![1.0]);
        assert!((tr.reward.as_slice()[1] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn horizon_terminates_and_returns_sum() {
        let mut env = EnvKind::PointMass2.make();
        env.reset(0);
        let mut total = [0.0, 0.0];
        let mut steps = 0;
        loop {
            let tr = env.step(&[0.5]).unwrap();
            total[0] += tr.reward.as_slice()[0];
            total[1] += tr.reward.as_slice()[1];
            steps += 1;
            if tr.terminal {
                break;
            }
        }
        assert_eq!(steps, 50);
        // v ramps by 0.05 per step and saturates at 1 after 20 steps
        let speed: f64 = (1..=50).map(|t| (0.05 * t as f64).min(1.0)).sum();
        assert!((total[0] - speed).abs() < 1e-9);
        assert!((total[1] - 50.0 * (0.3 - 0.15 * 0.25)).abs() < 1e-9);
    }

    #[test]
    fn true_ccs_contents() {
        let ccs = true_ccs(EnvKind::ConcaveBandit).unwrap();
        assert_eq!(ccs.len(), 1001);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let close = |p: &ObjectiveVector, q: [f64; 2]| (p.as_slice()[0] - q[0]).abs() < 1e-12 && (p.as_slice()[1] - q[1]).abs() < 1e-12;
        assert!(ccs.iter().any(|p| close(p, [1.0, 0.0])));
        assert!(ccs.iter().any(|p| close(p, [0.0, 1.0])));
        assert!(ccs.iter().any(|p| close(p, [h, h])));
        assert!(true_ccs(EnvKind::PointMass2).is_none());
        let hv = hypervolume(&ccs, &[0.0, 0.0]).unwrap();
        // Riemann oracle for the quarter disk
        let n = 200_000;
        let riemann: f64 = (0..n).map(|i| { let x = (i as f64 + 0.5) / n as f64; (1.0 - x * x).sqrt() / n as f64 }).sum();
        assert!((riemann - std::f64::consts::FRAC_PI_4).abs() < 1e-6);
        assert!((hv - riemann).abs() < 0.002);
    }

    #[test]
    fn bandit_scalarised_optimum_is_atan2() {
        for w in generate_simplex_grid(2, 0.1).unwrap() {
            let (w1, w2) = (w.as_slice()[0], w.as_slice()[1]);
            let best = (0..=10_000)
                .map(|i| -1.0 + 2.0 * i as f64 / 10_000.0)
                .map(|a| { let t = bandit_angle(a); (t, w1 * t.cos() + w2 * t.sin()) })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!((best.0 - w2.atan2(w1)).abs() < 2e-4, "w = {w}");
        }
    }

    #[test]
    fn unknown_env_lists_valid_names() {
        let err = EnvKind::from_name("hopper").unwrap_err().to_string();
        assert!(err.contains("concave-bandit") && err.contains("pointmass-2"));
    }

    #[test]
    fn trace_csv() {
        let mut env = EnvKind::PointMass2.make();
        env.reset(0);
        let trace = vec![env.step(&[1.0]).unwrap()];
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next().unwrap(), "step,s1,s2,a1,r1,r2");
        assert_eq!(s.lines().count(), 2);
    }
}
