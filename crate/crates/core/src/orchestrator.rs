//! Staged training loops for the four variants.
//!
//! Every variant runs the same schedule: a warm-up stage of `Q` iterations
//! followed by `Z` stages of `C` iterations, with an evaluation after each
//! stage. Variants differ only in which vectors a policy conditions on while
//! training and which vectors it is evaluated on:
//!
//! | variant | training vectors            | evaluated on              |
//! |---------|-----------------------------|---------------------------|
//! | fixed   | pivot                       | pivot                     |
//! | random  | uniform over candidates     | all candidates            |
//! | mean    | working pool (β = 0)        | pool ∪ candidates         |
//! | ucb     | working pool (β scheduled)  | pool ∪ candidates         |

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{self, AcquisitionError, SelectionLogRow, SelectionStrategy};
use crate::envs::{Env, EnvKind};
use crate::metrics::{self, FrontPoint, MetricsError};
use crate::policy::{PolicyOptimizer, WeightConditionedPolicy};
use crate::ppo::{self, IterationStats, PpoConfig, PpoError, Resample, WeightSampler};
use crate::surrogate::{self, SurrogateConfig, SurrogateDataset, SurrogateEnsemble, SurrogateError};
use crate::weightspace::{self, DecompositionConfig, ScalarisationVector, SubSpace, WeightSpaceError};
use crate::{mix_seed, ObjectiveVector};

const TAG_INIT: u64 = 1;
const TAG_TRAIN: u64 = 2;
const TAG_SURROGATE: u64 = 3;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    WeightSpace(#[from] WeightSpaceError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Fixed,
    Random,
    Mean,
    Ucb,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Fixed, Variant::Random, Variant::Mean, Variant::Ucb];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fixed => "fixed",
            Variant::Random => "random",
            Variant::Mean => "mean",
            Variant::Ucb => "ucb",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant {s:?} (expected fixed, random, mean or ucb)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaMode {
    Schedule,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub env: EnvKind,
    pub seeds: Vec<u64>,
    /// Concurrent trainers; 0 means one per (seed, sub-space).
    pub workers: usize,
    /// Hypervolume reference point; derived from the data when absent.
    pub reference: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { variant: Variant::Ucb, env: EnvKind::PointMass2, seeds: vec![0, 1, 2], workers: 0, reference: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Warm-up iterations `Q`.
    pub warmup_iters: usize,
    /// Iterations per stage `C`.
    pub stage_iters: usize,
    /// Stages after warm-up `Z`.
    pub stages: usize,
    pub eval_episodes: usize,
    /// Redraw the conditioning vector every this many environment steps; 0
    /// redraws at each episode start.
    pub resample_steps: usize,
    /// Evaluate every candidate each stage rather than only the working pool.
    pub evaluate_all_candidates: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            warmup_iters: 10,
            stage_iters: 10,
            stages: 10,
            eval_episodes: 1,
            resample_steps: 0,
            evaluate_all_candidates: true,
        }
    }
}

impl ScheduleConfig {
    pub fn resample(&self) -> Resample {
        if self.resample_steps == 0 {
            Resample::Episode
        } else {
            Resample::Steps(self.resample_steps)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub strategy: SelectionStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run: RunConfig,
    pub decomposition: DecompositionConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
}

impl ExperimentConfig {
    /// Defaults for an environment: the standard decomposition for its
    /// objective count and the PPO hyperparameters.
    pub fn for_env(env: EnvKind) -> Self {
        let decomposition = if env.spec().m == 2 {
            DecompositionConfig::two_objective()
        } else {
            DecompositionConfig::three_objective()
        };
        Self {
            run: RunConfig { env, ..Default::default() },
            decomposition,
            ppo: PpoConfig::default(),
            schedule: ScheduleConfig::default(),
            surrogate: SurrogateConfig::default(),
            acquisition: AcquisitionConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: String| Err(OrchestratorError::InvalidConfig(m));
        let spec = self.run.env.spec();
        if self.decomposition.m != spec.m {
            return bad(format!("decomposition m = {} but {} has {} objectives", self.decomposition.m, self.run.env, spec.m));
        }
        // also checks that every cell holds M candidates
        weightspace::decompose(&self.decomposition)?;
        self.ppo.validate()?;
        self.surrogate.validate().map_err(|e| OrchestratorError::InvalidConfig(e.to_string()))?;
        if self.run.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut seen = self.run.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.run.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.schedule.warmup_iters == 0 || self.schedule.stage_iters == 0 || self.schedule.eval_episodes == 0 {
            return bad("warmup_iters, stage_iters and eval_episodes must be at least 1".into());
        }
        if let Some(r) = &self.run.reference {
            if r.len() != spec.m || r.iter().any(|x| !x.is_finite()) {
                return bad(format!("reference must hold {} finite values", spec.m));
            }
        }
        Ok(())
    }
}

/// One evaluation of one policy on one conditioning vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub stage: usize,
    pub seed: u64,
    pub k: usize,
    pub w: ScalarisationVector,
    pub value: ObjectiveVector,
}

/// Evaluation records of all stages. Policies are overwritten in place, so the
/// number of distinct `(seed, k)` entries stays `K × seeds`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoArchive {
    records: Vec<ArchiveRecord>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<ArchiveRecord>) -> Self {
        Self { records }
    }

    pub fn push(&mut self, r: ArchiveRecord) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[ArchiveRecord] {
        &self.records
    }

    pub fn policy_count(&self) -> usize {
        self.policy_count_at(usize::MAX)
    }

    /// Distinct `(seed, k)` policies with records up to `stage`.
    pub fn policy_count_at(&self, stage: usize) -> usize {
        let mut ids: Vec<(u64, usize)> = self.records.iter().filter(|r| r.stage <= stage).map(|r| (r.seed, r.k)).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.records.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn last_stage(&self) -> usize {
        self.records.iter().map(|r| r.stage).max().unwrap_or(0)
    }

    /// Non-dominated records of one seed up to and including `stage`.
    pub fn front(&self, seed: u64, stage: usize) -> Vec<FrontPoint> {
        let pts: Vec<FrontPoint> = self
            .records
            .iter()
            .filter(|r| r.seed == seed && r.stage <= stage)
            .map(|r| FrontPoint { objective: r.value.clone(), k: r.k, seed: r.seed, w: r.w.clone() })
            .collect();
        metrics::pareto_filter_tagged(&pts)
    }

    pub fn values(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.value.as_slice()).collect()
    }
}

/// Metrics of one seed's cumulative archive after one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub seed: u64,
    pub hv: f64,
    pub eu: f64,
    /// NaN when the front has fewer than two points.
    pub sparsity: f64,
    pub front_size: usize,
    pub live_policies: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub stage: usize,
    pub seed: u64,
    pub k: usize,
    pub iteration: usize,
    pub stats: IterationStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReturnRow {
    pub stage: usize,
    pub seed: u64,
    pub k: usize,
    pub mean_return: f64,
}

/// A sub-space whose surrogate could not be fitted; its pool is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedAcquisition {
    pub stage: usize,
    pub seed: u64,
    pub k: usize,
    pub reason: String,
}

/// Policies keyed by `(seed, k)`.
pub type PolicySet = Vec<((u64, usize), WeightConditionedPolicy)>;

type StageOutcome = Result<(Vec<IterationStats>, Vec<(ScalarisationVector, ObjectiveVector)>), PpoError>;

pub struct RunResult {
    pub config: ExperimentConfig,
    pub subspaces: Vec<SubSpace>,
    pub archive: ParetoArchive,
    pub reference: Vec<f64>,
    pub reports: Vec<StageReport>,
    pub train_log: Vec<TrainLogRow>,
    pub policy_returns: Vec<PolicyReturnRow>,
    pub selection_log: Vec<SelectionLogRow>,
    pub skipped: Vec<SkippedAcquisition>,
    /// `(seed, k, j, dataset)` for every surrogate.
    pub surrogate_data: Vec<(u64, usize, usize, SurrogateDataset)>,
    /// Final policies keyed by `(seed, k)`, seed-major.
    pub policies: PolicySet,
    /// Wall-clock seconds per stage; kept apart from the reports so those
    /// stay byte-stable.
    pub stage_seconds: Vec<f64>,
    pub live_policies: Vec<usize>,
}

/// Mean undiscounted per-objective return over `episodes` episodes with
/// mean actions.
pub fn evaluate_policy(
    policy: &WeightConditionedPolicy,
    env: &mut Env,
    w: &ScalarisationVector,
    episodes: usize,
) -> Result<ObjectiveVector, PpoError> {
    let m = env.spec().m;
    // running mean, so identical episodes reproduce the single-episode value exactly
    let mut mean = vec![0.0; m];
    for ep in 0..episodes.max(1) {
        let mut ret = vec![0.0; m];
        let mut state = env.reset(0);
        loop {
            let a = policy.mean_action(&state, w)?;
            let tr = env.step(&a)?;
            for (t, r) in ret.iter_mut().zip(tr.reward.as_slice()) {
                *t += r;
            }
            if tr.terminal {
                break;
            }
            state = tr.next_state;
        }
        for (mu, r) in mean.iter_mut().zip(&ret) {
            *mu += (r - *mu) / (ep + 1) as f64;
        }
    }
    Ok(ObjectiveVector::new(mean))
}

struct Trainer {
    seed: u64,
    k: usize,
    policy: WeightConditionedPolicy,
    opt: PolicyOptimizer,
    env: Env,
    rng: ChaCha8Rng,
    subspace: SubSpace,
    iterations: usize,
    datasets: Vec<SurrogateDataset>,
    /// Latest value of every vector evaluated so far.
    known: BTreeMap<String, (ScalarisationVector, ObjectiveVector)>,
    last_eval: Vec<(ScalarisationVector, ObjectiveVector)>,
}

impl Trainer {
    fn new(cfg: &ExperimentConfig, seed: u64, subspace: SubSpace) -> Self {
        let spec = cfg.run.env.spec();
        let k = subspace.index;
        let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, k as u64, TAG_INIT));
        let policy = WeightConditionedPolicy::new(spec.state_dim, spec.action_dim, spec.m, &cfg.ppo.hidden, &mut init_rng);
        let opt = policy.optimizer();
        Self {
            seed,
            k,
            policy,
            opt,
            env: cfg.run.env.make(),
            rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, k as u64, TAG_TRAIN)),
            subspace,
            iterations: 0,
            datasets: vec![SurrogateDataset::new(); spec.m],
            known: BTreeMap::new(),
            last_eval: Vec::new(),
        }
    }

    fn sampler(&self, variant: Variant) -> WeightSampler {
        match variant {
            Variant::Fixed => WeightSampler::Fixed(self.subspace.pivot.clone()),
            Variant::Random => WeightSampler::Uniform(self.subspace.candidates.clone()),
            Variant::Mean | Variant::Ucb => WeightSampler::Uniform(self.subspace.working_pool.clone()),
        }
    }

    fn train(&mut self, iters: usize, variant: Variant, cfg: &ExperimentConfig) -> Result<Vec<IterationStats>, PpoError> {
        let mut sampler = self.sampler(variant);
        let resample = cfg.schedule.resample();
        let mut out = Vec::with_capacity(iters);
        for _ in 0..iters {
            let s = ppo::train_iteration(
                &mut self.policy,
                &mut self.opt,
                &mut self.env,
                &mut sampler,
                resample,
                &cfg.ppo,
                &mut self.rng,
            )?;
            self.iterations += 1;
            out.push(s);
        }
        Ok(out)
    }

    fn eval_set(&self, variant: Variant, stage: usize, cfg: &ExperimentConfig) -> Vec<ScalarisationVector> {
        match variant {
            Variant::Fixed => vec![self.subspace.pivot.clone()],
            Variant::Random => self.subspace.candidates.clone(),
            Variant::Mean | Variant::Ucb => {
                if stage == 0 || cfg.schedule.evaluate_all_candidates {
                    let mut set = self.subspace.candidates.clone();
                    for w in &self.subspace.working_pool {
                        if !set.contains(w) {
                            set.push(w.clone());
                        }
                    }
                    set
                } else {
                    self.subspace.working_pool.clone()
                }
            }
        }
    }

    fn evaluate(&mut self, ws: &[ScalarisationVector], episodes: usize) -> Result<Vec<(ScalarisationVector, ObjectiveVector)>, PpoError> {
        ws.iter()
            .map(|w| Ok((w.clone(), evaluate_policy(&self.policy, &mut self.env, w, episodes)?)))
            .collect()
    }

    /// Appends the change between the previous and the current evaluation
    /// on the vectors both share.
    fn record_deltas(&mut self, stage: usize, current: &[(ScalarisationVector, ObjectiveVector)]) -> Result<(), SurrogateError> {
        let now: BTreeMap<String, &(ScalarisationVector, ObjectiveVector)> = current.iter().map(|e| (e.0.key(), e)).collect();
        let earlier: Vec<(ScalarisationVector, ObjectiveVector)> =
            self.last_eval.iter().filter(|(w, _)| now.contains_key(&w.key())).cloned().collect();
        let later: Vec<(ScalarisationVector, ObjectiveVector)> = earlier.iter().map(|(w, _)| now[&w.key()].clone()).collect();
        for (j, d) in self.datasets.iter_mut().enumerate() {
            d.append_stage_data(stage, j, &earlier, &later)?;
        }
        Ok(())
    }

    fn fit_surrogates(&self, stage: usize, cfg: &SurrogateConfig) -> Result<Vec<SurrogateEnsemble>, SurrogateError> {
        self.datasets
            .iter()
            .enumerate()
            .map(|(j, d)| {
                let tag = TAG_SURROGATE + ((stage as u64) << 8) + ((j as u64) << 4);
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, self.k as u64, tag));
                surrogate::fit_ensemble(d, cfg, &mut rng)
            })
            .collect()
    }
}

fn build_pool(workers: usize, trainers: usize) -> Result<rayon::ThreadPool, OrchestratorError> {
    let n = if workers == 0 { trainers.max(1) } else { workers };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| OrchestratorError::ThreadPool(e.to_string()))
}

pub fn run_fixed(cfg: &ExperimentConfig) -> Result<RunResult, OrchestratorError> {
    run_variant(cfg, Variant::Fixed, BetaMode::Schedule)
}

pub fn run_random(cfg: &ExperimentConfig) -> Result<RunResult, OrchestratorError> {
    run_variant(cfg, Variant::Random, BetaMode::Schedule)
}

/// Surrogate-guided training; `BetaMode::Zero` is the mean variant.
pub fn run_ucb(cfg: &ExperimentConfig, beta_mode: BetaMode) -> Result<RunResult, OrchestratorError> {
    let variant = match beta_mode {
        BetaMode::Schedule => Variant::Ucb,
        BetaMode::Zero => Variant::Mean,
    };
    run_variant(cfg, variant, beta_mode)
}

/// Runs the variant named in the config.
pub fn run(cfg: &ExperimentConfig) -> Result<RunResult, OrchestratorError> {
    match cfg.run.variant {
        Variant::Fixed => run_fixed(cfg),
        Variant::Random => run_random(cfg),
        Variant::Mean => run_ucb(cfg, BetaMode::Zero),
        Variant::Ucb => run_ucb(cfg, BetaMode::Schedule),
    }
}

fn run_variant(cfg: &ExperimentConfig, variant: Variant, beta_mode: BetaMode) -> Result<RunResult, OrchestratorError> {
    cfg.validate()?;
    let subspaces = weightspace::decompose(&cfg.decomposition)?;
    let mut trainers: Vec<Trainer> = cfg
        .run
        .seeds
        .iter()
        .flat_map(|&seed| subspaces.iter().map(move |s| (seed, s.clone())))
        .map(|(seed, s)| Trainer::new(cfg, seed, s))
        .collect();
    let pool = build_pool(cfg.run.workers, trainers.len())?;
    let guided = matches!(variant, Variant::Mean | Variant::Ucb);

    let mut archive = ParetoArchive::new();
    let mut train_log = Vec::new();
    let mut policy_returns = Vec::new();
    let mut selection_log = Vec::new();
    let mut skipped = Vec::new();
    let mut stage_seconds = Vec::new();
    let mut live_policies = Vec::new();

    for stage in 0..=cfg.schedule.stages {
        let started = Instant::now();
        let iters = if stage == 0 { cfg.schedule.warmup_iters } else { cfg.schedule.stage_iters };

        let trained: Vec<StageOutcome> = pool.install(|| {
            trainers
                .par_iter_mut()
                .map(|t| {
                    let first_iter = t.iterations;
                    let stats = t.train(iters, variant, cfg)?;
                    debug_assert_eq!(t.iterations, first_iter + iters);
                    let ws = t.eval_set(variant, stage, cfg);
                    let evals = t.evaluate(&ws, cfg.schedule.eval_episodes)?;
                    Ok((stats, evals))
                })
                .collect()
        });

        // barrier: single collector for archive and logs, in trainer order
        for (t, res) in trainers.iter_mut().zip(trained) {
            let (stats, evals) = res?;
            let base_iter = t.iterations - stats.len();
            for (i, s) in stats.iter().enumerate() {
                train_log.push(TrainLogRow { stage, seed: t.seed, k: t.k, iteration: base_iter + i, stats: *s });
            }
            let mean_return = stats.last().map_or(f64::NAN, |s| s.mean_scalarised_return);
            policy_returns.push(PolicyReturnRow { stage, seed: t.seed, k: t.k, mean_return });
            for (w, v) in &evals {
                archive.push(ArchiveRecord { stage, seed: t.seed, k: t.k, w: w.clone(), value: v.clone() });
            }
            if guided {
                if stage >= 1 {
                    if let Err(e) = t.record_deltas(stage, &evals) {
                        skipped.push(SkippedAcquisition { stage, seed: t.seed, k: t.k, reason: e.to_string() });
                    }
                }
                for (w, v) in &evals {
                    t.known.insert(w.key(), (w.clone(), v.clone()));
                }
            }
            t.last_eval = evals;
        }
        live_policies.push(archive.policy_count_at(stage));

        if guided && stage >= 1 && stage < cfg.schedule.stages {
            let t_prime = stage as i64;
            let beta = match beta_mode {
                BetaMode::Schedule => acquisition::beta(t_prime)?,
                BetaMode::Zero => 0.0,
            };
            let mut base: BTreeMap<u64, Vec<ObjectiveVector>> = BTreeMap::new();
            for t in &trainers {
                base.entry(t.seed).or_default().extend(t.last_eval.iter().map(|(_, v)| v.clone()));
            }
            let n = cfg.decomposition.n_select;
            let strategy = cfg.acquisition.strategy;
            let selections: Vec<Result<Vec<acquisition::Selection>, String>> = pool.install(|| {
                trainers
                    .par_iter()
                    .map(|t| {
                        let ensembles = t.fit_surrogates(stage, &cfg.surrogate).map_err(|e| e.to_string())?;
                        let current: Vec<(ScalarisationVector, ObjectiveVector)> = t
                            .subspace
                            .candidates
                            .iter()
                            .filter_map(|w| t.known.get(&w.key()).cloned())
                            .collect();
                        let cands = acquisition::score_candidates(&ensembles, &current, beta).map_err(|e| e.to_string())?;
                        acquisition::select_weights(&cands, &base[&t.seed], n.min(cands.len()), None, strategy)
                            .map_err(|e| e.to_string())
                    })
                    .collect()
            });
            for (t, sel) in trainers.iter_mut().zip(selections) {
                match sel {
                    Ok(sel) => {
                        for (rank, s) in sel.iter().enumerate() {
                            selection_log.push(SelectionLogRow {
                                stage,
                                seed: t.seed,
                                k: t.k,
                                rank,
                                w: s.w.clone(),
                                hv: s.hv,
                                beta,
                                sigma: s.sigma.clone(),
                            });
                        }
                        t.subspace.set_working_pool(sel.into_iter().map(|s| s.w).collect())?;
                    }
                    Err(reason) => skipped.push(SkippedAcquisition { stage, seed: t.seed, k: t.k, reason }),
                }
            }
        }
        stage_seconds.push(started.elapsed().as_secs_f64());
    }

    let reference = match &cfg.run.reference {
        Some(r) => r.clone(),
        None => metrics::reference_point(&archive.values())?,
    };
    let reports = stage_reports(&archive, &reference, cfg.decomposition.m, &live_policies)?;
    let surrogate_data = trainers
        .iter()
        .flat_map(|t| t.datasets.iter().enumerate().map(move |(j, d)| (t.seed, t.k, j, d.clone())))
        .collect();
    let policies = trainers.into_iter().map(|t| ((t.seed, t.k), t.policy)).collect();
    Ok(RunResult {
        config: cfg.clone(),
        subspaces,
        archive,
        reference,
        reports,
        train_log,
        policy_returns,
        selection_log,
        skipped,
        surrogate_data,
        policies,
        stage_seconds,
        live_policies,
    })
}

/// Dense weight grid used for expected utility.
pub fn eu_weights(m: usize) -> Vec<ScalarisationVector> {
    let step = if m == 2 { 0.01 } else { 0.05 };
    weightspace::generate_simplex_grid(m, step).expect("fixed step divides 1")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontMetrics {
    pub hv: f64,
    pub eu: f64,
    pub sparsity: f64,
    pub front_size: usize,
}

pub fn front_metrics(front: &[FrontPoint], reference: &[f64], eu_grid: &[ScalarisationVector]) -> Result<FrontMetrics, MetricsError> {
    let objs: Vec<&[f64]> = front.iter().map(|p| p.objective.as_slice()).collect();
    Ok(FrontMetrics {
        hv: metrics::hypervolume(&objs, reference)?,
        eu: if objs.is_empty() { f64::NAN } else { metrics::expected_utility(&objs, eu_grid)? },
        sparsity: metrics::sparsity(&objs).unwrap_or(f64::NAN),
        front_size: objs.len(),
    })
}

/// One report per (stage, seed) on the cumulative archive.
pub fn stage_reports(
    archive: &ParetoArchive,
    reference: &[f64],
    m: usize,
    live_policies: &[usize],
) -> Result<Vec<StageReport>, MetricsError> {
    let grid = eu_weights(m);
    let mut out = Vec::new();
    for stage in 0..=archive.last_stage() {
        for seed in archive.seeds() {
            let fm = front_metrics(&archive.front(seed, stage), reference, &grid)?;
            out.push(StageReport {
                stage,
                seed,
                hv: fm.hv,
                eu: fm.eu,
                sparsity: fm.sparsity,
                front_size: fm.front_size,
                live_policies: live_policies.get(stage).copied().unwrap_or_else(|| archive.policy_count_at(stage)),
            });
        }
    }
    Ok(out)
}

/// Sample mean and (n − 1) standard deviation; 0 for a single value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Orders a sub-space's fine cell so that every prefix is spread out: start
/// at the pivot, then repeatedly take the point farthest from those already
/// taken (ties to the lexicographically smaller point).
pub fn nested_order(pivot: &ScalarisationVector, cell: &[ScalarisationVector]) -> Vec<ScalarisationVector> {
    let mut remaining: Vec<ScalarisationVector> = cell.to_vec();
    remaining.sort_by(|a, b| a.lex_cmp(b));
    let mut out = Vec::with_capacity(remaining.len());
    let start = remaining
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.sq_distance(pivot).total_cmp(&b.sq_distance(pivot)))
        .map(|(i, _)| i);
    let Some(start) = start else { return out };
    let first = remaining.remove(start);
    let mut nearest: Vec<f64> = remaining.iter().map(|w| w.sq_distance(&first)).collect();
    out.push(first);
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            if nearest[i] > nearest[best] + 1e-15 {
                best = i;
            }
        }
        let chosen = remaining.remove(best);
        nearest.remove(best);
        for (d, w) in nearest.iter_mut().zip(&remaining) {
            *d = d.min(w.sq_distance(&chosen));
        }
        out.push(chosen);
    }
    out
}

/// Nested evaluation grids for every sub-space: a fine simplex grid split
/// into nearest-pivot cells, refined until the smallest cell holds at least
/// `max_count` points, then ordered by [`nested_order`].
pub fn nested_grids(cfg: &DecompositionConfig, max_count: usize) -> Result<Vec<Vec<ScalarisationVector>>, WeightSpaceError> {
    let pivots = weightspace::generate_pivots(cfg.m, cfg.step1, cfg.pivot_mode, cfg.k)?;
    let base = weightspace::divisions(cfg.step1)?;
    let mut d = base;
    loop {
        let grid = weightspace::simplex_grid_divisions(cfg.m, d);
        let mut cells: Vec<Vec<ScalarisationVector>> = vec![Vec::new(); pivots.len()];
        for w in grid {
            cells[weightspace::nearest_pivot(&w, &pivots)].push(w);
        }
        if cells.iter().all(|c| c.len() >= max_count) {
            return Ok(pivots.iter().zip(&cells).map(|(p, c)| nested_order(p, c)).collect());
        }
        if d > 1 << 16 {
            return Err(WeightSpaceError::InsufficientGrid {
                available: cells.iter().map(Vec::len).min().unwrap_or(0),
                requested: max_count,
            });
        }
        d *= 2;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub hv_mean: f64,
    pub hv_std: f64,
    pub sparsity_mean: f64,
    pub sparsity_std: f64,
}

/// For each count, evaluates every policy on the first `count` points of its
/// sub-space's nested grid and reports HV and sparsity over seeds. The
/// reference point is shared by all counts.
pub fn interpolation_sweep(
    env: EnvKind,
    decomposition: &DecompositionConfig,
    policies: &[((u64, usize), WeightConditionedPolicy)],
    counts: &[usize],
    eval_episodes: usize,
    reference: Option<&[f64]>,
    workers: usize,
) -> Result<Vec<SweepRow>, OrchestratorError> {
    if counts.is_empty() || counts.windows(2).any(|w| w[0] >= w[1]) || counts[0] == 0 {
        return Err(OrchestratorError::InvalidConfig("counts must be positive and strictly ascending".into()));
    }
    let max = *counts.last().unwrap();
    let grids = nested_grids(decomposition, max)?;
    let pool = build_pool(workers, policies.len())?;
    // evaluating on the largest grid covers every smaller one
    let evals: Vec<Result<Vec<ObjectiveVector>, PpoError>> = pool.install(|| {
        policies
            .par_iter()
            .map(|((_, k), p)| {
                let mut e = env.make();
                grids[*k][..max].iter().map(|w| evaluate_policy(p, &mut e, w, eval_episodes)).collect()
            })
            .collect()
    });
    let evals: Vec<Vec<ObjectiveVector>> = evals.into_iter().collect::<Result<_, _>>()?;
    let reference = match reference {
        Some(r) => r.to_vec(),
        None => {
            let all: Vec<&[f64]> = evals.iter().flatten().map(|v| v.as_slice()).collect();
            metrics::reference_point(&all)?
        }
    };
    let mut seeds: Vec<u64> = policies.iter().map(|((s, _), _)| *s).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut rows = Vec::with_capacity(counts.len());
    for &n in counts {
        let mut hvs = Vec::new();
        let mut sps = Vec::new();
        for &seed in &seeds {
            let pts: Vec<&[f64]> = policies
                .iter()
                .zip(&evals)
                .filter(|(((s, _), _), _)| *s == seed)
                .flat_map(|(_, e)| e[..n].iter().map(|v| v.as_slice()))
                .collect();
            let front: Vec<&[f64]> = metrics::pareto_indices(&pts).into_iter().map(|i| pts[i]).collect();
            hvs.push(metrics::hypervolume(&front, &reference)?);
            sps.push(metrics::sparsity(&front).unwrap_or(f64::NAN));
        }
        let (hv_mean, hv_std) = mean_std(&hvs);
        let (sparsity_mean, sparsity_std) = mean_std(&sps);
        rows.push(SweepRow { n, hv_mean, hv_std, sparsity_mean, sparsity_std });
    }
    Ok(rows)
}
