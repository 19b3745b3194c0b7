//! Python bindings: metrics, the weight grid, the β schedule, and whole
//! experiment runs driven by a TOML config string.

use moppo::acquisition;
use moppo::cli::{self, TrainOverrides};
use moppo::config::{self, Overrides};
use moppo::metrics;
use moppo::orchestrator;
use moppo::weightspace;
use moppo::EnvKind;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Exact hypervolume of `points` (2 or 3 objectives) against `reference`.
#[pyfunction]
fn hypervolume(points: Vec<Vec<f64>>, reference: Vec<f64>) -> PyResult<f64> {
    metrics::hypervolume(&points, &reference).map_err(value_err)
}

/// Indices of the non-dominated points, in input order.
#[pyfunction]
fn pareto_indices(points: Vec<Vec<f64>>) -> Vec<usize> {
    metrics::pareto_indices(&points)
}

#[pyfunction]
fn sparsity(points: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::sparsity(&points).map_err(value_err)
}

/// Mean over the standard weight grid of the best linear utility.
#[pyfunction]
fn expected_utility(points: Vec<Vec<f64>>) -> PyResult<f64> {
    let m = points.first().map_or(2, Vec::len);
    metrics::expected_utility(&points, &orchestrator::eu_weights(m)).map_err(value_err)
}

#[pyfunction]
fn beta(t: i64) -> PyResult<f64> {
    acquisition::beta(t).map_err(value_err)
}

/// All simplex points with coordinates on multiples of `step`.
#[pyfunction]
fn simplex_grid(m: usize, step: f64) -> PyResult<Vec<Vec<f64>>> {
    let g = weightspace::generate_simplex_grid(m, step).map_err(value_err)?;
    Ok(g.into_iter().map(|w| w.as_slice().to_vec()).collect())
}

#[pyfunction]
fn envs() -> Vec<String> {
    EnvKind::ALL.iter().map(|e| e.name().to_string()).collect()
}

fn resolve(config_toml: &str, overrides: Option<Vec<String>>) -> PyResult<orchestrator::ExperimentConfig> {
    let table = config::parse_table(config_toml).map_err(value_err)?;
    let mut o = Overrides::new();
    for s in overrides.unwrap_or_default() {
        o.push_assignment(&s).map_err(value_err)?;
    }
    config::resolve(Some(table), &o).map_err(value_err)
}

/// Resolved config as TOML plus its hash.
#[pyfunction]
#[pyo3(signature = (config_toml, overrides=None))]
fn validate_config(config_toml: &str, overrides: Option<Vec<String>>) -> PyResult<(String, String)> {
    let cfg = resolve(config_toml, overrides)?;
    Ok((config::to_toml_string(&cfg).map_err(value_err)?, config::config_hash(&cfg)))
}

/// Runs an experiment in memory and returns its stage reports and reference
/// point. The GIL is released while training.
#[pyfunction]
#[pyo3(signature = (config_toml, overrides=None))]
fn run<'py>(py: Python<'py>, config_toml: &str, overrides: Option<Vec<String>>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = resolve(config_toml, overrides)?;
    let result = py
        .detach(|| orchestrator::run(&cfg))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let reports = pyo3::types::PyList::empty(py);
    for r in &result.reports {
        let d = PyDict::new(py);
        d.set_item("stage", r.stage)?;
        d.set_item("seed", r.seed)?;
        d.set_item("hv", r.hv)?;
        d.set_item("eu", r.eu)?;
        d.set_item("sparsity", r.sparsity)?;
        d.set_item("front_size", r.front_size)?;
        d.set_item("live_policies", r.live_policies)?;
        reports.append(d)?;
    }
    let out = PyDict::new(py);
    out.set_item("variant", cfg.run.variant.name())?;
    out.set_item("env", cfg.run.env.name())?;
    out.set_item("reference", result.reference.clone())?;
    out.set_item("reports", reports)?;
    let last = result.archive.last_stage();
    let fronts = PyDict::new(py);
    for seed in result.archive.seeds() {
        let f: Vec<Vec<f64>> = result.archive.front(seed, last).iter().map(|p| p.objective.as_slice().to_vec()).collect();
        fronts.set_item(seed, f)?;
    }
    out.set_item("fronts", fronts)?;
    Ok(out)
}

/// Same as `moppo train`; returns the exit code.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir, overrides=None))]
fn train(py: Python<'_>, config_path: Option<String>, out_dir: String, overrides: Option<Vec<String>>) -> i32 {
    let o = TrainOverrides { set: overrides.unwrap_or_default(), ..Default::default() };
    py.detach(|| cli::cmd_train(config_path.as_deref().map(std::path::Path::new), std::path::Path::new(&out_dir), &o))
}

#[pymodule]
fn pymoppo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(hypervolume, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_indices, m)?)?;
    m.add_function(wrap_pyfunction!(sparsity, m)?)?;
    m.add_function(wrap_pyfunction!(expected_utility, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(simplex_grid, m)?)?;
    m.add_function(wrap_pyfunction!(envs, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
