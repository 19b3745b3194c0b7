//! Bagged elastic-net models of the per-stage change in one objective as a
//! linear function of the conditioning vector.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::weightspace::ScalarisationVector;
use crate::ObjectiveVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("evaluation sets are keyed by different weight vectors")]
    KeyMismatch,
    #[error("need at least {needed} rows, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("coordinate descent did not converge in {} iterations", .0.iterations)]
    DidNotConverge(Box<ElasticNetModel>),
    #[error("non-finite value in surrogate data")]
    NonFinite,
    #[error("invalid surrogate config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    /// Overall penalty strength λ.
    pub penalty: f64,
    /// Share of the penalty on the L1 term, ρ.
    pub l1_ratio: f64,
    pub ensemble_size: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Fit each member on a bootstrap resample; off fits every member on the
    /// full data.
    pub bootstrap: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { penalty: 1e-3, l1_ratio: 0.5, ensemble_size: 10, max_iter: 10_000, tol: 1e-7, bootstrap: true }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if !(self.penalty >= 0.0) || !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(SurrogateError::InvalidConfig("penalty must be >= 0 and l1_ratio in [0, 1]".into()));
        }
        if self.ensemble_size == 0 || self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(SurrogateError::InvalidConfig("ensemble_size, max_iter and tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateRow {
    /// Stage of the later evaluation.
    pub stage: usize,
    pub w: ScalarisationVector,
    pub delta: f64,
}

/// Rows for one (sub-space, objective) pair; append-only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDataset {
    rows: Vec<SurrogateRow>,
}

/// Evaluations of one policy keyed by the conditioning vector.
pub type Evaluations = Vec<(ScalarisationVector, ObjectiveVector)>;

fn keyed(e: &Evaluations) -> BTreeMap<String, &ObjectiveVector> {
    e.iter().map(|(w, v)| (w.key(), v)).collect()
}

impl SurrogateDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[SurrogateRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: SurrogateRow) -> Result<(), SurrogateError> {
        if !row.delta.is_finite() {
            return Err(SurrogateError::NonFinite);
        }
        self.rows.push(row);
        Ok(())
    }

    /// One row per vector: objective `j` at the later stage minus the earlier.
    /// Rows follow the order of `earlier`.
    pub fn append_stage_data(
        &mut self,
        stage: usize,
        j: usize,
        earlier: &Evaluations,
        later: &Evaluations,
    ) -> Result<usize, SurrogateError> {
        let before = keyed(earlier);
        let after = keyed(later);
        if before.len() != after.len() || before.keys().ne(after.keys()) {
            return Err(SurrogateError::KeyMismatch);
        }
        let mut new_rows = Vec::with_capacity(earlier.len());
        for (w, v) in earlier {
            let delta = after[&w.key()].as_slice()[j] - v.as_slice()[j];
            if !delta.is_finite() {
                return Err(SurrogateError::NonFinite);
            }
            new_rows.push(SurrogateRow { stage, w: w.clone(), delta });
        }
        let added = new_rows.len();
        self.rows.extend(new_rows);
        Ok(added)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ElasticNetModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Coordinate descent on
/// `(1/2n)·Σ(y − ψ₀ − ψᵀx)² + λ(ρ‖ψ‖₁ + (1−ρ)/2·‖ψ‖₂²)` with an unpenalised
/// intercept. Stops when the largest coefficient change in a sweep is below
/// `tol`; otherwise the last iterate is returned inside `DidNotConverge`.
pub fn fit_elastic_net_xy(
    x: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    rho: f64,
    max_iter: usize,
    tol: f64,
) -> Result<ElasticNetModel, SurrogateError> {
    let n = y.len();
    if n == 0 || x.len() != n {
        return Err(SurrogateError::InsufficientData { needed: 1, have: n.min(x.len()) });
    }
    let p = x[0].len();
    let nf = n as f64;
    let mut x_mean = vec![0.0; p];
    for row in x {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += v / nf;
        }
    }
    let y_mean = y.iter().sum::<f64>() / nf;
    let xc: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip(&x_mean).map(|(v, m)| v - m).collect()).collect();
    let sq: Vec<f64> = (0..p).map(|j| xc.iter().map(|r| r[j] * r[j]).sum::<f64>() / nf).collect();
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut coef = vec![0.0; p];
    let l1 = lambda * rho;
    let l2 = lambda * (1.0 - rho);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            let denom = sq[j] + l2;
            let old = coef[j];
            let new = if sq[j] <= 1e-300 || denom <= 0.0 {
                0.0
            } else {
                let rho_j = xc.iter().zip(&resid).map(|(r, e)| r[j] * e).sum::<f64>() / nf + sq[j] * old;
                soft_threshold(rho_j, l1) / denom
            };
            if new != old {
                let d = new - old;
                for (e, r) in resid.iter_mut().zip(&xc) {
                    *e -= d * r[j];
                }
                coef[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
    if coef.iter().any(|c| !c.is_finite()) || !intercept.is_finite() {
        return Err(SurrogateError::NonFinite);
    }
    let model = ElasticNetModel { coefficients: coef, intercept, iterations, converged };
    if converged {
        Ok(model)
    } else {
        Err(SurrogateError::DidNotConverge(Box::new(model)))
    }
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

pub fn fit_elastic_net(data: &SurrogateDataset, cfg: &SurrogateConfig) -> Result<ElasticNetModel, SurrogateError> {
    let x: Vec<Vec<f64>> = data.rows.iter().map(|r| r.w.as_slice().to_vec()).collect();
    let y: Vec<f64> = data.rows.iter().map(|r| r.delta).collect();
    fit_elastic_net_xy(&x, &y, cfg.penalty, cfg.l1_ratio, cfg.max_iter, cfg.tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateEnsemble {
    models: Vec<ElasticNetModel>,
}

impl SurrogateEnsemble {
    pub fn from_models(models: Vec<ElasticNetModel>) -> Self {
        assert!(!models.is_empty(), "ensemble needs at least one model");
        Self { models }
    }

    pub fn models(&self) -> &[ElasticNetModel] {
        &self.models
    }

    /// Mean and population standard deviation of the member predictions.
    pub fn predict(&self, w: &ScalarisationVector) -> (f64, f64) {
        let preds: Vec<f64> = self.models.iter().map(|m| m.predict(w.as_slice())).collect();
        let b = preds.len() as f64;
        // shifted by the first member so identical members give exactly σ = 0
        let shift = preds[0];
        let mean = shift + preds.iter().map(|p| p - shift).sum::<f64>() / b;
        let var = preds.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / b;
        (mean, var.max(0.0).sqrt())
    }

    /// Current value plus the predicted change.
    pub fn predict_objective(&self, current: f64, w: &ScalarisationVector) -> f64 {
        current + self.predict(w).0
    }
}

/// `B` members, each on an `n`-row bootstrap resample (or the full data when
/// bootstrapping is off).
pub fn fit_ensemble<R: Rng + ?Sized>(
    data: &SurrogateDataset,
    cfg: &SurrogateConfig,
    rng: &mut R,
) -> Result<SurrogateEnsemble, SurrogateError> {
    let n = data.len();
    // a single row fits the intercept only, so every member agrees
    if n == 0 {
        return Err(SurrogateError::InsufficientData { needed: 1, have: 0 });
    }
    let x: Vec<Vec<f64>> = data.rows.iter().map(|r| r.w.as_slice().to_vec()).collect();
    let y: Vec<f64> = data.rows.iter().map(|r| r.delta).collect();
    let mut models = Vec::with_capacity(cfg.ensemble_size);
    for _ in 0..cfg.ensemble_size {
        let model = if cfg.bootstrap {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let bx: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
            let by: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            fit_elastic_net_xy(&bx, &by, cfg.penalty, cfg.l1_ratio, cfg.max_iter, cfg.tol)?
        } else {
            fit_elastic_net_xy(&x, &y, cfg.penalty, cfg.l1_ratio, cfg.max_iter, cfg.tol)?
        };
        models.push(model);
    }
    Ok(SurrogateEnsemble { models })
}

/// Columns: stage, k, j, w0..w{m-1}, delta.
pub fn write_dataset_csv<W: Write>(out: &mut W, k: usize, j: usize, data: &SurrogateDataset, header: bool) -> std::io::Result<()> {
    let m = data.rows.first().map_or(0, |r| r.w.dim());
    if header {
        let ws: Vec<String> = (0..m).map(|i| format!("w{i}")).collect();
        writeln!(out, "stage,k,j,{},delta", ws.join(","))?;
    }
    for r in &data.rows {
        let ws: Vec<String> = r.w.as_slice().iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{},{},{},{},{}", r.stage, k, j, ws.join(","), r.delta)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sv(v: &[f64]) -> ScalarisationVector {
        ScalarisationVector::new(v.to_vec()).unwrap()
    }

    fn evals(ws: &[f64], vals: &[f64]) -> Evaluations {
        ws.iter().zip(vals).map(|(a, v)| (sv(&[*a, 1.0 - a]), ObjectiveVector::new(vec![*v, 0.0]))).collect()
    }

    fn linear_dataset(f: impl Fn(f64) -> f64) -> SurrogateDataset {
        let mut d = SurrogateDataset::new();
        for i in 0..=10 {
            let a = i as f64 / 10.0;
            d.push(SurrogateRow { stage: 1, w: sv(&[a, 1.0 - a]), delta: f(a) }).unwrap();
        }
        d
    }

    #[test]
    fn append_rows() {
        let mut d = SurrogateDataset::new();
        d.append_stage_data(1, 0, &evals(&[0.3], &[1.0]), &evals(&[0.3], &[1.5])).unwrap();
        assert_eq!(d.rows()[0].delta, 0.5);
        let mut same = SurrogateDataset::new();
        same.append_stage_data(1, 0, &evals(&[0.1, 0.2], &[1.0, 2.0]), &evals(&[0.1, 0.2], &[1.0, 2.0])).unwrap();
        assert!(same.rows().iter().all(|r| r.delta == 0.0));
        assert_eq!(
            d.append_stage_data(2, 0, &evals(&[0.3], &[1.0]), &evals(&[0.4], &[1.0])),
            Err(SurrogateError::KeyMismatch)
        );
    }

    #[test]
    fn three_stages_five_vectors_give_ten_rows() {
        let ws = [0.0, 0.25, 0.5, 0.75, 1.0];
        let stages: Vec<Evaluations> = (0..3).map(|z| evals(&ws, &[z as f64; 5])).collect();
        let mut d = SurrogateDataset::new();
        for z in 1..3 {
            d.append_stage_data(z, 0, &stages[z - 1], &stages[z]).unwrap();
        }
        assert_eq!(d.len(), (3 - 1) * 5);
    }

    #[test]
    fn unpenalised_fit_recovers_exact_line() {
        let d = linear_dataset(|a| 2.0 * a - 1.0);
        let cfg = SurrogateConfig { penalty: 0.0, ..Default::default() };
        let m = fit_elastic_net(&d, &cfg).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-6, "{:?}", m);
        for r in d.rows() {
            assert!((m.predict(r.w.as_slice()) - r.delta).abs() < 1e-6);
        }
    }

    #[test]
    fn heavy_penalty_shrinks_to_mean() {
        let d = linear_dataset(|a| 3.0 * a + 0.2);
        let m = fit_elastic_net(&d, &SurrogateConfig { penalty: 1e6, ..Default::default() }).unwrap();
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-6));
        let mean = d.rows().iter().map(|r| r.delta).sum::<f64>() / d.len() as f64;
        assert!((m.intercept - mean).abs() < 1e-6);
    }

    #[test]
    fn ridge_two_points_matches_closed_form() {
        let x = vec![vec![1.0, 3.0], vec![2.0, 0.5]];
        let y = vec![1.0, -2.0];
        let m = fit_elastic_net_xy(&x, &y, 1.0, 0.0, 100_000, 1e-12).unwrap();
        // centred normal equations (Xcᵀ Xc / n + λI) ψ = Xcᵀ yc / n, solved by Cramer's rule
        let n = 2.0;
        let xm = [1.5, 1.75];
        let ym = -0.5;
        let xc: Vec<[f64; 2]> = x.iter().map(|r| [r[0] - xm[0], r[1] - xm[1]]).collect();
        let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
        let a = |i: usize, j: usize| xc.iter().map(|r| r[i] * r[j]).sum::<f64>() / n + if i == j { 1.0 } else { 0.0 };
        let b = |i: usize| xc.iter().zip(&yc).map(|(r, v)| r[i] * v).sum::<f64>() / n;
        let det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
        let p0 = (b(0) * a(1, 1) - a(0, 1) * b(1)) / det;
        let p1 = (a(0, 0) * b(1) - b(0) * a(1, 0)) / det;
        assert!((m.coefficients[0] - p0).abs() < 1e-6 && (m.coefficients[1] - p1).abs() < 1e-6);
        assert!((m.intercept - (ym - p0 * xm[0] - p1 * xm[1])).abs() < 1e-6);
    }

    #[test]
    fn least_squares_on_general_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truth = [0.7, -1.3, 2.1];
        let x: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.4 + r.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + 0.05 * rng.random_range(-1.0..1.0)).collect();
        let m = fit_elastic_net_xy(&x, &y, 0.0, 0.5, 100_000, 1e-12).unwrap();
        // normal equations on [1, x] by Gaussian elimination
        let cols = 4;
        let mut a = vec![vec![0.0; cols + 1]; cols];
        for (r, v) in x.iter().zip(&y) {
            let f = [1.0, r[0], r[1], r[2]];
            for i in 0..cols {
                for j in 0..cols {
                    a[i][j] += f[i] * f[j];
                }
                a[i][cols] += f[i] * v;
            }
        }
        for c in 0..cols {
            let piv = a[c][c];
            for j in c..=cols {
                a[c][j] /= piv;
            }
            for r in 0..cols {
                if r != c {
                    let f = a[r][c];
                    for j in c..=cols {
                        a[r][j] -= f * a[c][j];
                    }
                }
            }
        }
        assert!((m.intercept - a[0][cols]).abs() < 1e-6);
        for i in 0..3 {
            assert!((m.coefficients[i] - a[i + 1][cols]).abs() < 1e-6);
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        let d = linear_dataset(|a| a);
        let cfg = SurrogateConfig { penalty: 0.0, max_iter: 1, tol: 1e-300, ..Default::default() };
        match fit_elastic_net(&d, &cfg) {
            Err(SurrogateError::DidNotConverge(m)) => assert_eq!(m.iterations, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_full_data_member_matches_model() {
        let d = linear_dataset(|a| 0.5 * a);
        let cfg = SurrogateConfig { ensemble_size: 1, bootstrap: false, ..Default::default() };
        let e = fit_ensemble(&d, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let single = fit_elastic_net(&d, &cfg).unwrap();
        let w = sv(&[0.3, 0.7]);
        assert_eq!(e.predict(&w), (single.predict(w.as_slice()), 0.0));
    }

    #[test]
    fn repeated_row_has_zero_spread() {
        let mut d = SurrogateDataset::new();
        for _ in 0..5 {
            d.push(SurrogateRow { stage: 1, w: sv(&[0.4, 0.6]), delta: 0.25 }).unwrap();
        }
        let e = fit_ensemble(&d, &SurrogateConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (mean, sigma) = e.predict(&sv(&[0.9, 0.1]));
        assert!((mean - 0.25).abs() < 1e-12);
        assert_eq!(sigma, 0.0);
    }

    #[test]
    fn noisy_bootstrap_members_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut d = SurrogateDataset::new();
        for i in 0..20 {
            let a = i as f64 / 19.0;
            d.push(SurrogateRow { stage: 1, w: sv(&[a, 1.0 - a]), delta: a + 0.3 * rng.random_range(-1.0..1.0) }).unwrap();
        }
        let e = fit_ensemble(&d, &SurrogateConfig::default(), &mut rng).unwrap();
        let first = &e.models()[0].coefficients;
        assert!(e.models().iter().any(|m| &m.coefficients != first));
        let again = fit_ensemble(&d, &SurrogateConfig::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let again2 = fit_ensemble(&d, &SurrogateConfig::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(again, again2);
    }

    #[test]
    fn hand_variance_and_objective() {
        let m = |c: f64| ElasticNetModel { coefficients: vec![0.0, 0.0], intercept: c, iterations: 1, converged: true };
        let e = SurrogateEnsemble::from_models(vec![m(1.0), m(3.0)]);
        let w = sv(&[0.5, 0.5]);
        assert_eq!(e.predict(&w), (2.0, 1.0));
        let half = SurrogateEnsemble::from_models(vec![m(0.5)]);
        assert_eq!(half.predict_objective(1.0, &w), 1.5);
        let zero = SurrogateEnsemble::from_models(vec![m(0.0)]);
        assert_eq!(zero.predict_objective(0.7, &w), 0.7);
    }

    #[test]
    fn refit_after_append_equals_fresh_fit() {
        let a = linear_dataset(|x| x * x);
        let mut b = a.clone();
        for r in linear_dataset(|x| 1.0 - x).rows() {
            b.push(r.clone()).unwrap();
        }
        let cfg = SurrogateConfig::default();
        let mut grown = a.clone();
        let _ = fit_elastic_net(&grown, &cfg).unwrap();
        for r in &b.rows()[a.len()..] {
            grown.push(r.clone()).unwrap();
        }
        assert_eq!(fit_elastic_net(&grown, &cfg).unwrap(), fit_elastic_net(&b, &cfg).unwrap());
    }

    #[test]
    fn csv_dump() {
        let mut d = SurrogateDataset::new();
        d.push(SurrogateRow { stage: 2, w: sv(&[0.25, 0.75]), delta: -0.5 }).unwrap();
        let mut out = Vec::new();
        write_dataset_csv(&mut out, 1, 0, &d, true).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "stage,k,j,w0,w1,delta\n2,1,0,0.25,0.75,-0.5\n");
    }

    proptest! {
        #[test]
        fn member_order_does_not_matter(cs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..8), a in 0.0f64..1.0) {
            let models: Vec<ElasticNetModel> = cs.iter().map(|&(c0, c1, i)| ElasticNetModel { coefficients: vec![c0, c1], intercept: i, iterations: 1, converged: true }).collect();
            let mut rev = models.clone();
            rev.reverse();
            let w = sv(&[a, 1.0 - a]);
            let (m1, s1) = SurrogateEnsemble::from_models(models).predict(&w);
            let (m2, s2) = SurrogateEnsemble::from_models(rev).predict(&w);
            prop_assert!((m1 - m2).abs() < 1e-12 && (s1 - s2).abs() < 1e-12);
            prop_assert!(s1 >= 0.0);
        }
    }
}
