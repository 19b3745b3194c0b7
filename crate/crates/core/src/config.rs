//! Experiment configuration files and overrides.
//!
//! A config is TOML with one table per section (`run`, `decomposition`,
//! `ppo`, `schedule`, `surrogate`, `acquisition`). Keys missing from the file
//! take the defaults of the chosen environment. Every key name is unique
//! across sections, so overrides may name a key with or without its section:
//! `stages=4` and `schedule.stages=4` are the same override.
//!
//! Overrides apply in this order, later winning: file, `MOPPO_*` environment
//! variables, `--set key=value`, then the dedicated CLI flags.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use crate::envs::EnvKind;
use crate::orchestrator::ExperimentConfig;

pub const ENV_PREFIX: &str = "MOPPO_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Ordered `key = value` overrides. Values are parsed as TOML values and fall
/// back to plain strings, so `seeds=[0,1]`, `lr=1e-4` and `env=pointmass-3`
/// all work.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub pairs: Vec<(String, String)>,
}

impl Overrides {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.pairs.push((key.into(), value.into()));
    }

    /// Parses `key=value`.
    pub fn push_assignment(&mut self, s: &str) -> Result<(), ConfigError> {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse(format!("expected key=value, got '{s}'")))?;
        self.push(k.trim(), v.trim());
        Ok(())
    }

    /// `MOPPO_STAGE_ITERS=5` becomes `stage_iters=5`; a double underscore
    /// separates an explicit section (`MOPPO_SCHEDULE__STAGES`).
    pub fn from_env_vars<I: IntoIterator<Item = (String, String)>>(vars: I) -> Self {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let rest = k.strip_prefix(ENV_PREFIX)?;
                if rest.is_empty() {
                    return None;
                }
                Some((rest.to_ascii_lowercase().replace("__", "."), v))
            })
            .collect();
        // process env order is unspecified
        pairs.sort();
        Self { pairs }
    }

    pub fn extend(&mut self, other: Overrides) {
        self.pairs.extend(other.pairs);
    }
}

pub fn read_table(path: &Path) -> Result<Table, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_table(&text)
}

pub fn parse_table(text: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>().map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Builds a validated config from an optional file table plus overrides.
pub fn resolve(file: Option<Table>, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let file = file.unwrap_or_default();
    let env = pick_env(&file, overrides)?;
    let mut merged = defaults_table(env)?;
    let sections = section_map(&merged);
    for (name, item) in file {
        match (item, merged.get_mut(&name)) {
            (Value::Table(t), Some(Value::Table(base))) => {
                for (k, v) in t {
                    base.insert(k, v);
                }
            }
            (_, Some(_)) => return Err(ConfigError::Parse(format!("'{name}' must be a table"))),
            (item, None) => {
                // a bare top-level key is allowed when it names a unique key
                let (sec, key) = locate(&sections, &name)?;
                section_mut(&mut merged, &sec).insert(key, item);
            }
        }
    }
    for (k, v) in &overrides.pairs {
        let (sec, key) = locate(&sections, k)?;
        section_mut(&mut merged, &sec).insert(key, parse_value(v));
    }
    normalise_fractions(&mut merged)?;
    let cfg: ExperimentConfig = Value::Table(merged).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let file = path.map(read_table).transpose()?;
    resolve(file, overrides)
}

pub fn to_toml_string(cfg: &ExperimentConfig) -> Result<String, ConfigError> {
    toml::to_string(cfg).map_err(|e| ConfigError::Parse(e.to_string()))
}

/// SHA-256 of the canonical JSON form (sorted keys) of every semantic value.
/// `workers` is excluded: it never changes results.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut v = serde_json::to_value(cfg).expect("config serialises");
    if let Some(run) = v.get_mut("run").and_then(|r| r.as_object_mut()) {
        run.remove("workers");
    }
    let digest = Sha256::digest(canonical_json(&v).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value as J;
    match v {
        J::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", serde_json::to_string(k).unwrap(), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        J::Array(xs) => format!("[{}]", xs.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

fn defaults_table(env: EnvKind) -> Result<Table, ConfigError> {
    to_table(&ExperimentConfig::for_env(env))
}

fn to_table<T: Serialize>(v: &T) -> Result<Table, ConfigError> {
    Table::try_from(v).map_err(|e| ConfigError::Parse(e.to_string()))
}

fn pick_env(file: &Table, overrides: &Overrides) -> Result<EnvKind, ConfigError> {
    let mut name: Option<String> = file
        .get("run")
        .and_then(|r| r.get("env"))
        .or_else(|| file.get("env"))
        .and_then(|v| v.as_str())
        .map(str::to_string);
    for (k, v) in &overrides.pairs {
        if k == "env" || k == "run.env" {
            name = Some(match parse_value(v) {
                Value::String(s) => s,
                other => other.to_string(),
            });
        }
    }
    match name {
        Some(n) => EnvKind::from_name(&n).map_err(|e| ConfigError::Invalid(e.to_string())),
        None => Ok(EnvKind::PointMass2),
    }
}

/// key -> section, from the defaults plus the optional keys that serialise
/// to nothing when unset.
fn section_map(defaults: &Table) -> Vec<(String, String)> {
    let mut out = vec![("reference".to_string(), "run".to_string())];
    for (sec, v) in defaults {
        if let Value::Table(t) = v {
            for k in t.keys() {
                out.push((k.clone(), sec.clone()));
            }
        }
    }
    out
}

fn locate(sections: &[(String, String)], key: &str) -> Result<(String, String), ConfigError> {
    if let Some((sec, k)) = key.split_once('.') {
        return if sections.iter().any(|(kk, s)| kk == k && s == sec) {
            Ok((sec.to_string(), k.to_string()))
        } else {
            Err(ConfigError::UnknownKey(key.to_string()))
        };
    }
    sections
        .iter()
        .find(|(k, _)| k == key)
        .map(|(k, s)| (s.clone(), k.clone()))
        .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))
}

fn section_mut<'a>(t: &'a mut Table, sec: &str) -> &'a mut Table {
    t.entry(sec.to_string())
        .or_insert_with(|| Value::Table(Table::new()))
        .as_table_mut()
        .expect("sections are tables")
}

fn parse_value(s: &str) -> Value {
    format!("v = {s}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(s.to_string()))
}

/// Grid steps may be written as fractions, e.g. `step1 = "1/3"`.
fn normalise_fractions(t: &mut Table) -> Result<(), ConfigError> {
    let Some(Value::Table(d)) = t.get_mut("decomposition") else {
        return Ok(());
    };
    for key in ["step1", "step2"] {
        match d.get(key) {
            Some(Value::String(s)) => {
                let x = parse_fraction(s).ok_or_else(|| ConfigError::Invalid(format!("{key}: cannot read '{s}' as a number")))?;
                d.insert(key.to_string(), Value::Float(x));
            }
            Some(Value::Integer(i)) => {
                let x = *i as f64;
                d.insert(key.to_string(), Value::Float(x));
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn parse_fraction(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().ok()?;
            let b: f64 = b.trim().parse().ok()?;
            (b != 0.0).then_some(a / b)
        }
        None => s.parse().ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::Variant;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = resolve(None, &Overrides::new()).unwrap();
        assert_eq!(cfg, ExperimentConfig::for_env(EnvKind::PointMass2));
    }

    #[test]
    fn env_picks_decomposition_defaults() {
        let t = parse_table("[run]\nenv = \"pointmass-3\"\n").unwrap();
        let cfg = resolve(Some(t), &Overrides::new()).unwrap();
        assert_eq!(cfg.decomposition.m, 3);
        assert_eq!(cfg.decomposition.k, 36);
    }

    #[test]
    fn overrides_with_and_without_section() {
        let mut o = Overrides::new();
        o.push("stages", "4");
        o.push("ppo.lr", "1e-4");
        o.push("variant", "fixed");
        o.push("seeds", "[3, 4]");
        let cfg = resolve(None, &o).unwrap();
        assert_eq!(cfg.schedule.stages, 4);
        assert_eq!(cfg.ppo.lr, 1e-4);
        assert_eq!(cfg.run.variant, Variant::Fixed);
        assert_eq!(cfg.run.seeds, vec![3, 4]);
    }

    #[test]
    fn later_override_wins() {
        let t = parse_table("[schedule]\nstages = 7\n").unwrap();
        let mut o = Overrides::from_env_vars([("MOPPO_STAGES".to_string(), "5".to_string())]);
        assert_eq!(resolve(Some(t.clone()), &o).unwrap().schedule.stages, 5);
        o.push("schedule.stages", "2");
        assert_eq!(resolve(Some(t), &o).unwrap().schedule.stages, 2);
    }

    #[test]
    fn env_var_names() {
        let o = Overrides::from_env_vars([
            ("MOPPO_STAGE_ITERS".to_string(), "3".to_string()),
            ("MOPPO_SCHEDULE__WARMUP_ITERS".to_string(), "2".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ]);
        assert_eq!(
            o.pairs,
            vec![("schedule.warmup_iters".to_string(), "2".to_string()), ("stage_iters".to_string(), "3".to_string())]
        );
    }

    #[test]
    fn fractions() {
        let t = parse_table("[run]\nenv = \"concave-bandit\"\n[decomposition]\nstep1 = \"1/3\"\nstep2 = \"1/42\"\nk = 2\nm_candidates = 21\npivot_mode = \"interior-only\"\n").unwrap();
        let cfg = resolve(Some(t), &Overrides::new()).unwrap();
        assert_eq!(cfg.decomposition.step1, 1.0 / 3.0);
        assert_eq!(cfg.decomposition.step2, 1.0 / 42.0);
        assert_eq!(parse_fraction("0.25"), Some(0.25));
        assert_eq!(parse_fraction("1/0"), None);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut o = Overrides::new();
        o.push("stagez", "4");
        assert!(matches!(resolve(None, &o), Err(ConfigError::UnknownKey(_))));
        let t = parse_table("[ppo]\nlamda = 0.9\n").unwrap();
        assert!(matches!(resolve(Some(t), &Overrides::new()), Err(ConfigError::Parse(_))));
        let mut o = Overrides::new();
        o.push("ppo.stages", "4");
        assert!(matches!(resolve(None, &o), Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        let mut o = Overrides::new();
        o.push("env", "cartpole");
        let err = resolve(None, &o).unwrap_err().to_string();
        assert!(err.contains("pointmass-2"), "{err}");
        let mut o = Overrides::new();
        o.push("seeds", "[]");
        assert!(matches!(resolve(None, &o), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut o = Overrides::new();
        o.push("reference", "[-1.5, 0.25]");
        o.push("step2", "0.01");
        let cfg = resolve(None, &o).unwrap();
        let text = to_toml_string(&cfg).unwrap();
        let back = resolve(Some(parse_table(&text).unwrap()), &Overrides::new()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(config_hash(&back), config_hash(&cfg));
    }

    #[test]
    fn hash_ignores_order_and_workers() {
        let a = parse_table("[schedule]\nstages = 3\nstage_iters = 2\n[run]\nworkers = 1\n").unwrap();
        let b = parse_table("[run]\nworkers = 4\n[schedule]\nstage_iters = 2\nstages = 3\n").unwrap();
        let ca = resolve(Some(a), &Overrides::new()).unwrap();
        let cb = resolve(Some(b), &Overrides::new()).unwrap();
        assert_eq!(config_hash(&ca), config_hash(&cb));
        let mut o = Overrides::new();
        o.push("stages", "4");
        let cc = resolve(Some(parse_table("[schedule]\nstage_iters = 2\n").unwrap()), &o).unwrap();
        assert_ne!(config_hash(&ca), config_hash(&cc));
        assert_eq!(config_hash(&ca).len(), 64);
    }
}
