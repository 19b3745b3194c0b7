//! Two-layer decomposition of the scalarisation simplex.
//!
//! Layer one places `K` pivot vectors on a coarse simplex grid. Layer two
//! partitions a finer grid into nearest-pivot cells and keeps, for every
//! pivot, the `M` cell points closest to it as the sub-space candidates.
//!
//! All vectors are built from integer compositions and renormalised once, so
//! generation is exact and deterministic.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on the sum-to-one invariant.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Squared distances are quantised to this resolution so that geometric ties
/// are detected exactly and broken deterministically.
const DIST_QUANTUM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightSpaceError {
    #[error("step {0} does not divide 1 (1/step must be an integer)")]
    NonDivisibleStep(f64),
    #[error("pivot mode {mode} produced {produced} pivots but K = {expected}")]
    PivotCountMismatch {
        mode: PivotMode,
        produced: usize,
        expected: usize,
    },
    #[error("grid has {available} points but {requested} candidates were requested")]
    InsufficientGrid { available: usize, requested: usize },
    #[error("invalid scalarisation vector: {0}")]
    InvalidVector(String),
    #[error("invalid decomposition config: {0}")]
    InvalidConfig(String),
}

/// A point on the probability simplex parametrising a linear utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScalarisationVector(Vec<f64>);

impl ScalarisationVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, WeightSpaceError> {
        if weights.len() < 2 {
            return Err(WeightSpaceError::InvalidVector(format!(
                "need at least 2 components, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(WeightSpaceError::InvalidVector(format!(
                "components must be finite and non-negative: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(WeightSpaceError::InvalidVector(format!(
                "components sum to {sum}, expected 1"
            )));
        }
        Ok(Self(weights))
    }

    /// Builds `counts / divisions` and renormalises once.
    pub fn from_counts(counts: &[u32]) -> Self {
        let total: u32 = counts.iter().sum();
        assert!(total > 0, "empty composition");
        let raw: Vec<f64> = counts
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect();
        let s: f64 = raw.iter().sum();
        Self(raw.into_iter().map(|x| x / s).collect())
    }

    /// The unit vector for objective `j` out of `m`.
    pub fn axis(m: usize, j: usize) -> Self {
        let mut w = vec![0.0; m];
        w[j] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn sq_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Lexicographic comparison on components.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }

    /// Stable textual key, used to index evaluations by vector.
    pub fn key(&self) -> String {
        self.0
            .iter()
            .map(|x| format!("{x:.9}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl TryFrom<Vec<f64>> for ScalarisationVector {
    type Error = WeightSpaceError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ScalarisationVector> for Vec<f64> {
    fn from(w: ScalarisationVector) -> Self {
        w.0
    }
}

impl fmt::Display for ScalarisationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// How the coarse grid is turned into pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PivotMode {
    IncludeEndpoints,
    DropLast,
    InteriorOnly,
}

impl PivotMode {
    /// Mode reproducing the published pivot counts (10 for two objectives, 36
    /// for three at step 0.1).
    pub fn default_for(m: usize) -> Self {
        if m == 2 {
            PivotMode::DropLast
        } else {
            PivotMode::InteriorOnly
        }
    }
}

impl fmt::Display for PivotMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PivotMode::IncludeEndpoints => "include-endpoints",
            PivotMode::DropLast => "drop-last",
            PivotMode::InteriorOnly => "interior-only",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for PivotMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "include-endpoints" => Ok(PivotMode::IncludeEndpoints),
            "drop-last" => Ok(PivotMode::DropLast),
            "interior-only" => Ok(PivotMode::InteriorOnly),
            other => Err(format!(
                "unknown pivot mode '{other}' (expected include-endpoints, drop-last or interior-only)"
            )),
        }
    }
}

/// Number of grid divisions `1/step`, if it is an integer.
pub fn divisions(step: f64) -> Result<u32, WeightSpaceError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(WeightSpaceError::NonDivisibleStep(step));
    }
    let inv = 1.0 / step;
    let n = inv.round();
    if (inv - n).abs() > SIMPLEX_TOL * inv.max(1.0) {
        return Err(WeightSpaceError::NonDivisibleStep(step));
    }
    Ok(n as u32)
}

/// All compositions of `total` into `parts` non-negative integers, in
/// ascending lexicographic order.
fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(remaining: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=remaining {
            prefix.push(c);
            rec(remaining - c, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

/// Simplex grid with `divisions` intervals per axis.
pub fn simplex_grid_divisions(m: usize, divisions: u32) -> Vec<ScalarisationVector> {
    assert!(m >= 2 && divisions >= 1);
    compositions(divisions, m)
        .iter()
        .map(|c| ScalarisationVector::from_counts(c))
        .collect()
}

/// Every vector whose components are non-negative multiples of `step`.
pub fn generate_simplex_grid(m: usize, step: f64) -> Result<Vec<ScalarisationVector>, WeightSpaceError> {
    if m < 2 {
        return Err(WeightSpaceError::InvalidConfig(format!("m = {m} < 2")));
    }
    Ok(simplex_grid_divisions(m, divisions(step)?))
}

pub fn generate_pivots(
    m: usize,
    step1: f64,
    mode: PivotMode,
    expected: usize,
) -> Result<Vec<ScalarisationVector>, WeightSpaceError> {
    let n = divisions(step1)?;
    if m < 2 {
        return Err(WeightSpaceError::InvalidConfig(format!("m = {m} < 2")));
    }
    let comps = compositions(n, m);
    let pivots: Vec<ScalarisationVector> = match mode {
        PivotMode::IncludeEndpoints => comps.iter().map(|c| ScalarisationVector::from_counts(c)).collect(),
        PivotMode::DropLast => comps[..comps.len() - 1]
            .iter()
            .map(|c| ScalarisationVector::from_counts(c))
            .collect(),
        PivotMode::InteriorOnly => comps
            .iter()
            .filter(|c| c.iter().all(|&x| x > 0))
            .map(|c| ScalarisationVector::from_counts(c))
            .collect(),
    };
    if pivots.len() != expected {
        return Err(WeightSpaceError::PivotCountMismatch {
            mode,
            produced: pivots.len(),
            expected,
        });
    }
    Ok(pivots)
}

fn dist_key(a: &ScalarisationVector, b: &ScalarisationVector) -> i64 {
    (a.sq_distance(b) / DIST_QUANTUM).round() as i64
}

/// The `count` points of `pool` nearest to `pivot`, ties broken
/// lexicographically.
fn nearest(
    pivot: &ScalarisationVector,
    pool: Vec<ScalarisationVector>,
    count: usize,
) -> Result<Vec<ScalarisationVector>, WeightSpaceError> {
    if pool.len() < count {
        return Err(WeightSpaceError::InsufficientGrid {
            available: pool.len(),
            requested: count,
        });
    }
    let mut keyed: Vec<(i64, ScalarisationVector)> =
        pool.into_iter().map(|w| (dist_key(pivot, &w), w)).collect();
    keyed.sort_by(|(da, a), (db, b)| da.cmp(db).then_with(|| a.lex_cmp(b)));
    keyed.dedup_by(|(_, a), (_, b)| a.lex_cmp(b) == Ordering::Equal);
    if keyed.len() < count {
        return Err(WeightSpaceError::InsufficientGrid {
            available: keyed.len(),
            requested: count,
        });
    }
    Ok(keyed.into_iter().take(count).map(|(_, w)| w).collect())
}

/// The `count` points of the `step2` grid nearest to `pivot`.
pub fn generate_candidates(
    pivot: &ScalarisationVector,
    step2: f64,
    count: usize,
) -> Result<Vec<ScalarisationVector>, WeightSpaceError> {
    if count == 0 {
        return Err(WeightSpaceError::InvalidConfig("M must be at least 1".into()));
    }
    let grid = generate_simplex_grid(pivot.dim(), step2)?;
    nearest(pivot, grid, count)
}

/// Index of the nearest pivot; equal distances go to the lower index.
pub fn nearest_pivot(w: &ScalarisationVector, pivots: &[ScalarisationVector]) -> usize {
    let mut best = 0;
    let mut best_key = i64::MAX;
    for (k, p) in pivots.iter().enumerate() {
        let d = dist_key(w, p);
        if d < best_key {
            best = k;
            best_key = d;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    /// Number of objectives.
    pub m: usize,
    pub step1: f64,
    pub step2: f64,
    /// Pivot count `K`.
    pub k: usize,
    /// Candidates per sub-space `M`.
    pub m_candidates: usize,
    /// Working-pool size `N`.
    pub n_select: usize,
    pub pivot_mode: PivotMode,
}

impl DecompositionConfig {
    /// Two-objective defaults: K = 10 drop-last pivots at step 0.1 over a
    /// step-0.01 fine grid. The smallest nearest-pivot cell holds 6 points,
    /// which bounds M.
    pub fn two_objective() -> Self {
        Self {
            m: 2,
            step1: 0.1,
            step2: 0.01,
            k: 10,
            m_candidates: 6,
            n_select: 3,
            pivot_mode: PivotMode::DropLast,
        }
    }

    pub fn three_objective() -> Self {
        Self {
            m: 3,
            step1: 0.1,
            step2: 0.05,
            k: 36,
            m_candidates: 4,
            n_select: 2,
            pivot_mode: PivotMode::InteriorOnly,
        }
    }

    pub fn validate(&self) -> Result<(), WeightSpaceError> {
        if self.m < 2 {
            return Err(WeightSpaceError::InvalidConfig(format!("m = {} < 2", self.m)));
        }
        if !(self.step2 > 0.0 && self.step2 <= self.step1 && self.step1 <= 1.0) {
            return Err(WeightSpaceError::InvalidConfig(format!(
                "need 0 < step2 <= step1 <= 1, got step1 = {}, step2 = {}",
                self.step1, self.step2
            )));
        }
        let d1 = divisions(self.step1)?;
        let d2 = divisions(self.step2)?;
        if d2 % d1 != 0 {
            return Err(WeightSpaceError::InvalidConfig(format!(
                "step2 = {} must divide step1 = {} so pivots lie on the fine grid",
                self.step2, self.step1
            )));
        }
        if self.k == 0 {
            return Err(WeightSpaceError::InvalidConfig("K must be at least 1".into()));
        }
        if self.m_candidates == 0 || self.n_select == 0 || self.n_select > self.m_candidates {
            return Err(WeightSpaceError::InvalidConfig(format!(
                "need 1 <= N <= M, got N = {}, M = {}",
                self.n_select, self.m_candidates
            )));
        }
        Ok(())
    }
}

/// One pivot's share of the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SubSpace {
    /// Zero-based here; reports print it as is.
    pub index: usize,
    pub pivot: ScalarisationVector,
    pub candidates: Vec<ScalarisationVector>,
    pub working_pool: Vec<ScalarisationVector>,
}

impl SubSpace {
    pub fn contains_candidate(&self, w: &ScalarisationVector) -> bool {
        self.candidates.iter().any(|c| c.lex_cmp(w) == Ordering::Equal)
    }

    /// Replaces the working pool; every entry must be a candidate.
    pub fn set_working_pool(&mut self, pool: Vec<ScalarisationVector>) -> Result<(), WeightSpaceError> {
        if let Some(w) = pool.iter().find(|w| !self.contains_candidate(w)) {
            return Err(WeightSpaceError::InvalidVector(format!(
                "{w} is not a candidate of sub-space {}",
                self.index
            )));
        }
        self.working_pool = pool;
        Ok(())
    }
}

/// Builds the `K` sub-spaces. The fine grid is split into nearest-pivot
/// cells; each sub-space keeps the `M` points of its cell nearest to its
/// pivot. The initial working pool is the pivot itself.
pub fn decompose(config: &DecompositionConfig) -> Result<Vec<SubSpace>, WeightSpaceError> {
    config.validate()?;
    let pivots = generate_pivots(config.m, config.step1, config.pivot_mode, config.k)?;
    let fine = generate_simplex_grid(config.m, config.step2)?;
    let mut cells: Vec<Vec<ScalarisationVector>> = vec![Vec::new(); pivots.len()];
    for w in fine {
        cells[nearest_pivot(&w, &pivots)].push(w);
    }
    pivots
        .into_iter()
        .zip(cells)
        .enumerate()
        .map(|(index, (pivot, cell))| {
            let candidates = nearest(&pivot, cell, config.m_candidates)?;
            Ok(SubSpace {
                index,
                working_pool: vec![pivot.clone()],
                pivot,
                candidates,
            })
        })
        .collect()
}

/// One row per vector, `m` columns, 9 decimal digits.
pub fn write_weights_csv<W: Write>(out: &mut W, weights: &[ScalarisationVector]) -> std::io::Result<()> {
    if let Some(first) = weights.first() {
        let header: Vec<String> = (1..=first.dim()).map(|j| format!("w{j}")).collect();
        writeln!(out, "{}", header.join(","))?;
    }
    for w in weights {
        writeln!(out, "{}", w.key())?;
    }
    Ok(())
}
