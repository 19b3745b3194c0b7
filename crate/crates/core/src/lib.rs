//! Multi-objective PPO by decomposition.
//!
//! The scalarisation simplex is split into pivot sub-spaces ([`weightspace`]),
//! one weight-conditioned actor-critic ([`policy`]) is trained per sub-space
//! with PPO ([`ppo`]), and the vectors each policy trains on are chosen every
//! stage by a UCB acquisition over predicted front hypervolume
//! ([`surrogate`], [`acquisition`]). [`orchestrator`] runs the four variants
//! (fixed, random, mean, UCB) and [`metrics`] scores the resulting fronts.

pub mod acquisition;
pub mod cli;
pub mod config;
pub mod envs;
pub mod metrics;
pub mod neural;
pub mod orchestrator;
pub mod policy;
pub mod ppo;
pub mod surrogate;
pub mod weightspace;

use serde::{Deserialize, Serialize};

pub use envs::{Env, EnvKind};
pub use weightspace::ScalarisationVector;

/// Per-objective returns or predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector(Vec<f64>);

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for ObjectiveVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl AsRef<[f64]> for ObjectiveVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// SplitMix64 finaliser; derives independent stream seeds from `(seed, k, tag)`.
pub fn mix_seed(seed: u64, k: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(k.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(tag.wrapping_mul(0x94D0_49BB_1331_11EB))
        .wrapping_add(0x2545_F491_4F6C_DD1D);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
