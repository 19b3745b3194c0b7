//! `moppo` subcommands: train, report, interpolate, envs, validate.
//!
//! Each `cmd_*` returns a process exit code: 0 on success, 2 for invalid
//! input (config, manifest, counts, missing checkpoints), 3 for failures
//! while running.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition;
use crate::config::{self, ConfigError, Overrides};
use crate::envs::EnvKind;
use crate::metrics::{self, FrontPoint};
use crate::orchestrator::{self, ArchiveRecord, ExperimentConfig, ParetoArchive, RunResult};
use crate::policy::WeightConditionedPolicy;
use crate::weightspace::ScalarisationVector;
use crate::ObjectiveVector;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const HV_CURVE: &str = "hv_curve.csv";
pub const ARCHIVE: &str = "archive.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => EXIT_INVALID,
            CliError::Runtime(_) | CliError::Io(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub variant: String,
    pub env: String,
    pub seeds: Vec<u64>,
    pub started: String,
    pub finished: Option<String>,
    /// running, complete or failed
    pub status: String,
    pub error: Option<String>,
    /// Reference point the run's HV values were computed against.
    pub reference: Option<Vec<f64>>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: corrupt manifest: {e}", path.display())))
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(dir.join(MANIFEST), text + "\n")?;
        Ok(())
    }
}

/// Overrides gathered from the command line; `MOPPO_*` variables are
/// passed separately so tests can run without touching the process env.
#[derive(Debug, Clone, Default)]
pub struct TrainOverrides {
    pub env_vars: Vec<(String, String)>,
    pub set: Vec<String>,
    pub stages: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub workers: Option<usize>,
}

impl TrainOverrides {
    pub fn from_process_env() -> Self {
        Self { env_vars: std::env::vars().collect(), ..Default::default() }
    }

    fn resolve(&self) -> Result<Overrides, CliError> {
        let mut o = Overrides::from_env_vars(self.env_vars.iter().cloned());
        for s in &self.set {
            o.push_assignment(s)?;
        }
        if let Some(n) = self.stages {
            o.push("schedule.stages", n.to_string());
        }
        if let Some(seeds) = &self.seeds {
            let s: Vec<String> = seeds.iter().map(u64::to_string).collect();
            o.push("run.seeds", format!("[{}]", s.join(",")));
        }
        if let Some(w) = self.workers {
            o.push("run.workers", w.to_string());
        }
        Ok(o)
    }
}

pub fn load_config(config_path: Option<&Path>, overrides: &TrainOverrides) -> Result<ExperimentConfig, CliError> {
    Ok(config::load(config_path, &overrides.resolve()?)?)
}

fn report_err(e: &CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

pub fn cmd_train(config_path: Option<&Path>, out_dir: &Path, overrides: &TrainOverrides) -> i32 {
    match train(config_path, out_dir, overrides) {
        Ok(_) => EXIT_OK,
        Err(e) => report_err(&e),
    }
}

/// Runs the configured variant and writes every output file into `out_dir`.
pub fn train(config_path: Option<&Path>, out_dir: &Path, overrides: &TrainOverrides) -> Result<RunManifest, CliError> {
    let cfg = load_config(config_path, overrides)?;
    fs::create_dir_all(out_dir)?;
    let hash = config::config_hash(&cfg);
    let mut manifest = RunManifest {
        run_id: format!("{}-{}-{}", cfg.run.variant, cfg.run.env, &hash[..12]),
        config_hash: hash,
        variant: cfg.run.variant.to_string(),
        env: cfg.run.env.to_string(),
        seeds: cfg.run.seeds.clone(),
        started: chrono::Utc::now().to_rfc3339(),
        finished: None,
        status: "running".into(),
        error: None,
        reference: None,
        outputs: vec![CONFIG_SNAPSHOT.into()],
    };
    fs::write(out_dir.join(CONFIG_SNAPSHOT), config::to_toml_string(&cfg)?)?;
    manifest.write(out_dir)?;

    let outcome = orchestrator::run(&cfg)
        .map_err(|e| CliError::Runtime(e.to_string()))
        .and_then(|result| write_run_outputs(out_dir, &result).map(|outputs| (result, outputs)));
    manifest.finished = Some(chrono::Utc::now().to_rfc3339());
    match outcome {
        Ok((result, outputs)) => {
            manifest.status = "complete".into();
            manifest.reference = Some(result.reference.clone());
            manifest.outputs.extend(outputs);
            manifest.write(out_dir)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
            manifest.write(out_dir)?;
            Err(e)
        }
    }
}

fn create(dir: &Path, name: &str, outputs: &mut Vec<String>) -> Result<BufWriter<File>, CliError> {
    outputs.push(name.to_string());
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn names(prefix: &str, m: usize) -> String {
    join((0..m).map(|j| format!("{prefix}{j}")))
}

fn write_run_outputs(dir: &Path, r: &RunResult) -> Result<Vec<String>, CliError> {
    let m = r.config.decomposition.m;
    let mut outputs = Vec::new();

    let mut f = create(dir, HV_CURVE, &mut outputs)?;
    write_stage_reports(&mut f, &r.reports)?;
    f.flush()?;

    let mut f = create(dir, "policy_returns.csv", &mut outputs)?;
    writeln!(f, "stage,seed,k,mean_return")?;
    for p in &r.policy_returns {
        writeln!(f, "{},{},{},{}", p.stage, p.seed, p.k, p.mean_return)?;
    }
    f.flush()?;

    let mut f = create(dir, ARCHIVE, &mut outputs)?;
    write_archive(&mut f, r.archive.records(), m)?;
    f.flush()?;

    let last = r.archive.last_stage();
    let front: Vec<FrontPoint> = r.archive.seeds().into_iter().flat_map(|s| r.archive.front(s, last)).collect();
    let mut f = create(dir, "front.csv", &mut outputs)?;
    metrics::write_front_csv(&mut f, &front)?;
    f.flush()?;

    let mut f = create(dir, "selection_log.csv", &mut outputs)?;
    acquisition::write_selection_log(&mut f, &r.selection_log, m)?;
    f.flush()?;

    let mut f = create(dir, "skipped_acquisitions.csv", &mut outputs)?;
    writeln!(f, "stage,seed,k,reason")?;
    for s in &r.skipped {
        writeln!(f, "{},{},{},\"{}\"", s.stage, s.seed, s.k, s.reason.replace('"', "'"))?;
    }
    f.flush()?;

    let mut f = create(dir, "train_log.csv", &mut outputs)?;
    writeln!(f, "stage,seed,k,iteration,mean_scalarised_return,actor_loss,critic_loss,clip_fraction,aborted")?;
    for t in &r.train_log {
        let s = &t.stats;
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            t.stage, t.seed, t.k, t.iteration, s.mean_scalarised_return, s.actor_loss, s.critic_loss, s.clip_fraction, s.aborted
        )?;
    }
    f.flush()?;

    let mut f = create(dir, "surrogate_data.csv", &mut outputs)?;
    writeln!(f, "seed,stage,k,j,{},delta", names("w", m))?;
    for (seed, k, j, data) in &r.surrogate_data {
        for row in data.rows() {
            writeln!(f, "{seed},{},{k},{j},{},{}", row.stage, join(row.w.as_slice()), row.delta)?;
        }
    }
    f.flush()?;

    // wall-clock lives apart from hv_curve.csv so that file stays byte-stable
    let mut f = create(dir, "timing.csv", &mut outputs)?;
    writeln!(f, "stage,seconds,live_policies")?;
    for (stage, secs) in r.stage_seconds.iter().enumerate() {
        writeln!(f, "{stage},{secs},{}", r.live_policies.get(stage).copied().unwrap_or(0))?;
    }
    f.flush()?;

    let ck = dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ck)?;
    for ((seed, k), policy) in &r.policies {
        let name = checkpoint_name(*seed, *k);
        let mut f = BufWriter::new(File::create(ck.join(&name))?);
        policy.write_checkpoint(&mut f, &[("seed", seed.to_string()), ("k", k.to_string()), ("env", r.config.run.env.to_string())])?;
        f.flush()?;
        outputs.push(format!("{CHECKPOINT_DIR}/{name}"));
    }
    Ok(outputs)
}

pub fn checkpoint_name(seed: u64, k: usize) -> String {
    format!("policy_k{k}_seed{seed}.txt")
}

pub fn write_stage_reports<W: Write>(out: &mut W, reports: &[orchestrator::StageReport]) -> std::io::Result<()> {
    writeln!(out, "stage,seed,hv,eu,sparsity,front_size,live_policies")?;
    for r in reports {
        writeln!(out, "{},{},{},{},{},{},{}", r.stage, r.seed, r.hv, r.eu, r.sparsity, r.front_size, r.live_policies)?;
    }
    Ok(())
}

/// Columns: stage, seed, k, w0.., f0..
pub fn write_archive<W: Write>(out: &mut W, records: &[ArchiveRecord], m: usize) -> std::io::Result<()> {
    writeln!(out, "stage,seed,k,{},{}", names("w", m), names("f", m))?;
    for r in records {
        writeln!(out, "{},{},{},{},{}", r.stage, r.seed, r.k, join(r.w.as_slice()), join(r.value.as_slice()))?;
    }
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<ParetoArchive, CliError> {
    let bad = |m: String| CliError::Invalid(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let m = headers.iter().filter(|h| h.starts_with('f')).count();
    if m == 0 || headers.len() != 3 + 2 * m {
        return Err(bad("unexpected columns".into()));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> Result<f64, CliError> { row[i].parse().map_err(|_| bad(format!("bad value '{}'", &row[i]))) };
        let int = |i: usize| -> Result<u64, CliError> { row[i].parse().map_err(|_| bad(format!("bad value '{}'", &row[i]))) };
        let w: Vec<f64> = (0..m).map(|j| num(3 + j)).collect::<Result<_, _>>()?;
        let value: Vec<f64> = (0..m).map(|j| num(3 + m + j)).collect::<Result<_, _>>()?;
        records.push(ArchiveRecord {
            stage: int(0)? as usize,
            seed: int(1)?,
            k: int(2)? as usize,
            w: ScalarisationVector::new(w).map_err(|e| bad(e.to_string()))?,
            value: ObjectiveVector::new(value),
        });
    }
    Ok(ParetoArchive::from_records(records))
}

fn read_run_config(dir: &Path) -> Result<ExperimentConfig, CliError> {
    let path = dir.join(CONFIG_SNAPSHOT);
    let table = config::read_table(&path).map_err(|e| CliError::Invalid(e.to_string()))?;
    config::resolve(Some(table), &Overrides::new()).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// One row of the variant comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub run_id: String,
    pub variant: String,
    pub env: String,
    pub seeds: usize,
    pub hv_mean: f64,
    pub hv_std: f64,
    pub eu_mean: f64,
    pub eu_std: f64,
    pub sparsity_mean: f64,
    pub sparsity_std: f64,
}

pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> i32 {
    match report(run_dirs, out_dir) {
        Ok((rows, reference)) => {
            print!("{}", format_report(&rows, &reference));
            EXIT_OK
        }
        Err(e) => report_err(&e),
    }
}

/// Compares the final fronts of several runs against one shared reference
/// point. Writes `report.csv` and `report.txt` into `out_dir` and `pf.csv`
/// into every run directory.
pub fn report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<(Vec<ReportRow>, Vec<f64>), CliError> {
    if run_dirs.is_empty() {
        return Err(CliError::Invalid("no run directories given".into()));
    }
    let mut runs = Vec::new();
    for dir in run_dirs {
        let manifest = RunManifest::read(dir)?;
        if manifest.status != "complete" {
            return Err(CliError::Invalid(format!("{}: run status is '{}'", dir.display(), manifest.status)));
        }
        let cfg = read_run_config(dir)?;
        let archive = read_archive(&dir.join(ARCHIVE))?;
        runs.push((dir, manifest, cfg, archive));
    }
    let m = runs[0].2.decomposition.m;
    if runs.iter().any(|r| r.2.decomposition.m != m) {
        return Err(CliError::Invalid("runs have different objective counts".into()));
    }
    let explicit: Vec<Option<&Vec<f64>>> = runs.iter().map(|r| r.2.run.reference.as_ref()).collect();
    let reference = match explicit[0] {
        Some(r) if explicit.iter().all(|e| *e == Some(r)) => r.clone(),
        _ => {
            let all: Vec<&[f64]> = runs.iter().flat_map(|r| r.3.values()).collect();
            metrics::reference_point(&all).map_err(|e| CliError::Invalid(e.to_string()))?
        }
    };
    let grid = orchestrator::eu_weights(m);
    let mut rows = Vec::new();
    for (dir, manifest, _, archive) in &runs {
        let last = archive.last_stage();
        let (mut hv, mut eu, mut sp) = (Vec::new(), Vec::new(), Vec::new());
        let mut pf = Vec::new();
        for seed in archive.seeds() {
            let front = archive.front(seed, last);
            let fm = orchestrator::front_metrics(&front, &reference, &grid).map_err(|e| CliError::Runtime(e.to_string()))?;
            hv.push(fm.hv);
            eu.push(fm.eu);
            sp.push(fm.sparsity);
            pf.extend(front);
        }
        let mut f = BufWriter::new(File::create(dir.join("pf.csv"))?);
        metrics::write_front_csv(&mut f, &pf)?;
        f.flush()?;
        let (hv_mean, hv_std) = orchestrator::mean_std(&hv);
        let (eu_mean, eu_std) = orchestrator::mean_std(&eu);
        let (sparsity_mean, sparsity_std) = orchestrator::mean_std(&sp);
        rows.push(ReportRow {
            run_id: manifest.run_id.clone(),
            variant: manifest.variant.clone(),
            env: manifest.env.clone(),
            seeds: hv.len(),
            hv_mean,
            hv_std,
            eu_mean,
            eu_std,
            sparsity_mean,
            sparsity_std,
        });
    }
    fs::create_dir_all(out_dir)?;
    let mut f = BufWriter::new(File::create(out_dir.join("report.csv"))?);
    writeln!(f, "run_id,variant,env,seeds,hv_mean,hv_std,eu_mean,eu_std,sparsity_mean,sparsity_std,{}", names("ref", m))?;
    for r in &rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.run_id, r.variant, r.env, r.seeds, r.hv_mean, r.hv_std, r.eu_mean, r.eu_std, r.sparsity_mean, r.sparsity_std, join(&reference)
        )?;
    }
    f.flush()?;
    fs::write(out_dir.join("report.txt"), format_report(&rows, &reference))?;
    Ok((rows, reference))
}

pub fn format_report(rows: &[ReportRow], reference: &[f64]) -> String {
    let cell = |mean: f64, std: f64| format!("{mean:.4} ± {std:.4}");
    let mut table: Vec<[String; 5]> = vec![["variant".into(), "env".into(), "HV".into(), "EU".into(), "sparsity".into()]];
    for r in rows {
        table.push([
            r.variant.clone(),
            r.env.clone(),
            cell(r.hv_mean, r.hv_std),
            cell(r.eu_mean, r.eu_std),
            cell(r.sparsity_mean, r.sparsity_std),
        ]);
    }
    let widths: Vec<usize> = (0..5).map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    let r: Vec<String> = reference.iter().map(|x| format!("{x}")).collect();
    out.push_str(&format!("reference point: ({})\n", r.join(", ")));
    out
}

pub fn load_policies(dir: &Path, cfg: &ExperimentConfig) -> Result<orchestrator::PolicySet, CliError> {
    let mut out = Vec::new();
    for &seed in &cfg.run.seeds {
        for k in 0..cfg.decomposition.k {
            let path = dir.join(CHECKPOINT_DIR).join(checkpoint_name(seed, k));
            let f = File::open(&path).map_err(|e| CliError::Invalid(format!("missing checkpoint {}: {e}", path.display())))?;
            let (policy, _) = WeightConditionedPolicy::read_checkpoint(BufReader::new(f))
                .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
            out.push(((seed, k), policy));
        }
    }
    Ok(out)
}

pub fn cmd_interpolate(run_dir: &Path, counts: &[usize], workers: Option<usize>) -> i32 {
    match interpolate(run_dir, counts, workers) {
        Ok(rows) => {
            for r in &rows {
                println!("n={} hv={:.6} sparsity={:.6}", r.n, r.hv_mean, r.sparsity_mean);
            }
            EXIT_OK
        }
        Err(e) => report_err(&e),
    }
}

/// Evaluates the run's checkpoints on nested grids of each count and writes
/// `hv_vs_n.csv` and `sparsity_vs_n.csv` into the run directory.
pub fn interpolate(run_dir: &Path, counts: &[usize], workers: Option<usize>) -> Result<Vec<orchestrator::SweepRow>, CliError> {
    if counts.is_empty() || counts[0] == 0 || counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Invalid("counts must be positive and strictly ascending".into()));
    }
    let cfg = read_run_config(run_dir)?;
    let policies = load_policies(run_dir, &cfg)?;
    let rows = orchestrator::interpolation_sweep(
        cfg.run.env,
        &cfg.decomposition,
        &policies,
        counts,
        cfg.schedule.eval_episodes,
        cfg.run.reference.as_deref(),
        workers.unwrap_or(cfg.run.workers),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut hv = BufWriter::new(File::create(run_dir.join("hv_vs_n.csv"))?);
    let mut sp = BufWriter::new(File::create(run_dir.join("sparsity_vs_n.csv"))?);
    writeln!(hv, "n,hv_mean,hv_std")?;
    writeln!(sp, "n,sparsity_mean,sparsity_std")?;
    for r in &rows {
        writeln!(hv, "{},{},{}", r.n, r.hv_mean, r.hv_std)?;
        writeln!(sp, "{},{},{}", r.n, r.sparsity_mean, r.sparsity_std)?;
    }
    hv.flush()?;
    sp.flush()?;
    Ok(rows)
}

pub fn cmd_envs() -> i32 {
    for e in EnvKind::ALL {
        let s = e.spec();
        println!("{:<16} m={} state={} action={} horizon={:<3} {}", e.name(), s.m, s.state_dim, s.action_dim, s.horizon, e.description());
    }
    EXIT_OK
}

/// Resolves and validates a config, printing the resolved form and its hash.
pub fn cmd_validate(config_path: Option<&Path>, overrides: &TrainOverrides) -> i32 {
    let res = load_config(config_path, overrides).and_then(|cfg| Ok((config::to_toml_string(&cfg)?, config::config_hash(&cfg))));
    match res {
        Ok((text, hash)) => {
            print!("{text}");
            println!("# config hash {hash}");
            EXIT_OK
        }
        Err(e) => report_err(&e),
    }
}

#[derive(Debug, Parser)]
#[command(name = "moppo", version, about = "Multi-objective PPO by decomposition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config file; defaults apply when absent
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a key, e.g. --set lr=1e-4 --set schedule.stages=4
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Concurrent trainers (0 = one per seed and sub-space)
    #[arg(long)]
    pub workers: Option<usize>,
}

impl ConfigArgs {
    fn overrides(&self) -> TrainOverrides {
        TrainOverrides {
            set: self.set.clone(),
            stages: self.stages,
            seeds: self.seeds.clone(),
            workers: self.workers,
            ..TrainOverrides::from_process_env()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one variant and write the run directory
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compare finished runs (HV, EU, sparsity; mean ± std over seeds)
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory for report.csv and report.txt
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// HV and sparsity of a trained run on nested weight grids
    Interpolate {
        run: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50")]
        counts: Vec<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List environments
    Envs,
    /// Check a config and print its resolved form
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Train { config, out } => cmd_train(config.config.as_deref(), &out, &config.overrides()),
        Command::Report { runs, out } => cmd_report(&runs, &out),
        Command::Interpolate { run, counts, workers } => cmd_interpolate(&run, &counts, workers),
        Command::Envs => cmd_envs(),
        Command::Validate { config } => cmd_validate(config.config.as_deref(), &config.overrides()),
    }
}
