//! Choosing the conditioning vectors a sub-space trains on next: each
//! candidate's objective vector is predicted optimistically (mean change plus
//! β·σ) and candidates are ranked by the hypervolume they would add.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{hypervolume, reference_point, MetricsError};
use crate::surrogate::SurrogateEnsemble;
use crate::weightspace::ScalarisationVector;
use crate::ObjectiveVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcquisitionError {
    #[error("stage index must be >= 1, got {0}")]
    InvalidStage(i64),
    #[error("expected one fitted surrogate per objective ({expected}), got {got}")]
    UnfittedSurrogate { expected: usize, got: usize },
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error("asked for {requested} selections from {available} candidates")]
    TooMany { requested: usize, available: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionStrategy {
    /// Pick the best candidate, add it to the base set, repeat.
    #[default]
    SequentialGreedy,
    /// Score every candidate once against the base set and take the top N.
    SortTopN,
}

impl std::str::FromStr for SelectionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sequential-greedy" => Ok(Self::SequentialGreedy),
            "sort-top-n" | "sort-topn" => Ok(Self::SortTopN),
            other => Err(format!("unknown selection strategy {other:?} (sequential-greedy, sort-top-n)")),
        }
    }
}

/// `sqrt(ln(2t)/t)`.
pub fn beta(t_prime: i64) -> Result<f64, AcquisitionError> {
    if t_prime < 1 {
        return Err(AcquisitionError::InvalidStage(t_prime));
    }
    let t = t_prime as f64;
    Ok(((2.0 * t).ln() / t).sqrt())
}

/// Current value plus predicted change plus `beta · σ`, per objective.
/// Also returns the per-objective σ.
pub fn ucb_vector(
    ensembles: &[SurrogateEnsemble],
    current: &ObjectiveVector,
    w: &ScalarisationVector,
    beta: f64,
) -> Result<(ObjectiveVector, Vec<f64>), AcquisitionError> {
    if ensembles.is_empty() || ensembles.len() != current.dim() {
        return Err(AcquisitionError::UnfittedSurrogate { expected: current.dim(), got: ensembles.len() });
    }
    let mut out = Vec::with_capacity(ensembles.len());
    let mut sigmas = Vec::with_capacity(ensembles.len());
    for (e, v) in ensembles.iter().zip(current.as_slice()) {
        let (mean, sigma) = e.predict(w);
        out.push(v + mean + beta * sigma);
        sigmas.push(sigma);
    }
    Ok((ObjectiveVector::new(out), sigmas))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub w: ScalarisationVector,
    /// Predicted (optimistic) objective vector.
    pub predicted: ObjectiveVector,
    pub sigma: Vec<f64>,
}

/// Predicted vectors for every candidate with a known current value.
pub fn score_candidates(
    ensembles: &[SurrogateEnsemble],
    current: &[(ScalarisationVector, ObjectiveVector)],
    beta: f64,
) -> Result<Vec<Candidate>, AcquisitionError> {
    current
        .iter()
        .map(|(w, v)| {
            let (predicted, sigma) = ucb_vector(ensembles, v, w, beta)?;
            Ok(Candidate { w: w.clone(), predicted, sigma })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub w: ScalarisationVector,
    /// Hypervolume of the base set plus everything selected so far (greedy)
    /// or plus this candidate alone (sort-top-N).
    pub hv: f64,
    pub sigma: Vec<f64>,
}

fn better(a_hv: f64, a_w: &ScalarisationVector, b_hv: f64, b_w: &ScalarisationVector) -> bool {
    let tol = 1e-12 * a_hv.abs().max(b_hv.abs()).max(1.0);
    if (a_hv - b_hv).abs() <= tol {
        a_w.lex_cmp(b_w) == Ordering::Less
    } else {
        a_hv > b_hv
    }
}

/// Picks `n` distinct candidates maximising predicted front hypervolume
/// together with `base`. Without an explicit reference the componentwise
/// minimum over `base` and all predictions, less 1% of the range, is used.
pub fn select_weights(
    candidates: &[Candidate],
    base: &[ObjectiveVector],
    n: usize,
    reference: Option<&[f64]>,
    strategy: SelectionStrategy,
) -> Result<Vec<Selection>, AcquisitionError> {
    if candidates.is_empty() {
        return Err(AcquisitionError::EmptyCandidates);
    }
    if n > candidates.len() {
        return Err(AcquisitionError::TooMany { requested: n, available: candidates.len() });
    }
    let reference = match reference {
        Some(r) => r.to_vec(),
        None => {
            let mut all: Vec<&[f64]> = base.iter().map(|v| v.as_slice()).collect();
            all.extend(candidates.iter().map(|c| c.predicted.as_slice()));
            reference_point(&all)?
        }
    };
    let mut front: Vec<&[f64]> = base.iter().map(|v| v.as_slice()).collect();
    match strategy {
        SelectionStrategy::SequentialGreedy => {
            let mut remaining: Vec<&Candidate> = candidates.iter().collect();
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let mut best: Option<(usize, f64)> = None;
                for (i, c) in remaining.iter().enumerate() {
                    front.push(c.predicted.as_slice());
                    let hv = hypervolume(&front, &reference)?;
                    front.pop();
                    if best.is_none_or(|(b, bhv)| better(hv, &c.w, bhv, &remaining[b].w)) {
                        best = Some((i, hv));
                    }
                }
                let (i, hv) = best.expect("non-empty");
                let c = remaining.remove(i);
                front.push(c.predicted.as_slice());
                out.push(Selection { w: c.w.clone(), hv, sigma: c.sigma.clone() });
            }
            Ok(out)
        }
        SelectionStrategy::SortTopN => {
            let mut scored = Vec::with_capacity(candidates.len());
            for c in candidates {
                front.push(c.predicted.as_slice());
                scored.push((hypervolume(&front, &reference)?, c));
                front.pop();
            }
            scored.sort_by(|a, b| {
                if better(a.0, &a.1.w, b.0, &b.1.w) {
                    Ordering::Less
                } else if better(b.0, &b.1.w, a.0, &a.1.w) {
                    Ordering::Greater
                } else {
                    Ordering::Equal
                }
            });
            Ok(scored
                .into_iter()
                .take(n)
                .map(|(hv, c)| Selection { w: c.w.clone(), hv, sigma: c.sigma.clone() })
                .collect())
        }
    }
}

/// The β = 0 variant: candidates ranked on predicted means only.
pub fn mean_select_weights(
    ensembles: &[SurrogateEnsemble],
    current: &[(ScalarisationVector, ObjectiveVector)],
    base: &[ObjectiveVector],
    n: usize,
    reference: Option<&[f64]>,
    strategy: SelectionStrategy,
) -> Result<Vec<Selection>, AcquisitionError> {
    let candidates = score_candidates(ensembles, current, 0.0)?;
    select_weights(&candidates, base, n, reference, strategy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionLogRow {
    pub stage: usize,
    pub seed: u64,
    pub k: usize,
    pub rank: usize,
    pub w: ScalarisationVector,
    pub hv: f64,
    pub beta: f64,
    pub sigma: Vec<f64>,
}

/// Columns: stage, seed, k, rank, w0.., predicted_hv, beta, sigma0..
pub fn write_selection_log<W: Write>(out: &mut W, rows: &[SelectionLogRow], m: usize) -> std::io::Result<()> {
    let ws: Vec<String> = (0..m).map(|j| format!("w{j}")).collect();
    let ss: Vec<String> = (0..m).map(|j| format!("sigma{j}")).collect();
    writeln!(out, "stage,seed,k,rank,{},predicted_hv,beta,{}", ws.join(","), ss.join(","))?;
    for r in rows {
        let w: Vec<String> = r.w.as_slice().iter().map(|x| format!("{x}")).collect();
        let s: Vec<String> = r.sigma.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{},{},{},{},{},{},{},{}", r.stage, r.seed, r.k, r.rank, w.join(","), r.hv, r.beta, s.join(","))?;
    }
    Ok(())
}
