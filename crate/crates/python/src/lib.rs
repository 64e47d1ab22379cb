//! Python bindings. Configs are passed as `{key: value}` dicts using the same
//! dotted keys as the config file (`"topology.graph": "ring"`, ...).

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rrnet::abc::AbcSpec;
use rrnet::harness::verify::{verify as run_verify, Suite};
use rrnet::harness::{self, ExperimentConfig};
use rrnet::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn build_config(settings: Option<HashMap<String, String>>) -> PyResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut keys: Vec<(String, String)> = settings.unwrap_or_default().into_iter().collect();
    keys.sort();
    for (k, v) in keys {
        cfg.set(&k, &v).map_err(to_py)?;
    }
    Ok(cfg)
}

/// Canonical SHA-256 prefix of a config.
#[pyfunction]
#[pyo3(signature = (settings=None))]
fn config_hash(settings: Option<HashMap<String, String>>) -> PyResult<String> {
    Ok(build_config(settings)?.hash())
}

/// Spectral summary of the configured mixing matrix.
#[pyfunction]
#[pyo3(signature = (settings=None))]
fn spectrum<'py>(py: Python<'py>, settings: Option<HashMap<String, String>>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = build_config(settings)?;
    let w = harness::build_mixing(&cfg).map_err(to_py)?;
    let sp = w.spectral();
    let d = PyDict::new(py);
    d.set_item("n", w.n())?;
    d.set_item("lambda", sp.lambda)?;
    d.set_item("gap", sp.gap)?;
    d.set_item("lambda_min", sp.lambda_min)?;
    d.set_item("eigenvalues", sp.eigenvalues.clone())?;
    d.set_item("positive_definite", w.is_positive_definite())?;
    Ok(d)
}

/// Runs every configured (method, seed) pair. Returns one dict per run with
/// the method, seed, divergence flag and per-epoch columns.
#[pyfunction]
#[pyo3(signature = (settings=None, workers=1))]
fn run<'py>(
    py: Python<'py>,
    settings: Option<HashMap<String, String>>,
    workers: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = build_config(settings)?;
    let prepared = harness::prepare(&cfg).map_err(to_py)?;
    let runs = py
        .detach(|| harness::run_all(&cfg, &prepared, workers))
        .map_err(to_py)?;
    let mut out = Vec::with_capacity(runs.len());
    for (method, seed, res) in runs {
        let d = PyDict::new(py);
        d.set_item("method", method.name())?;
        d.set_item("seed", seed)?;
        d.set_item("diverged", res.diverged)?;
        d.set_item("accuracy", res.accuracy)?;
        let col = |f: &dyn Fn(&rrnet::metrics::TrajectoryRecord) -> Option<f64>| -> Vec<Option<f64>> {
            res.records.iter().map(f).collect()
        };
        d.set_item("t", res.records.iter().map(|r| r.t).collect::<Vec<_>>())?;
        d.set_item("alpha", res.records.iter().map(|r| r.alpha).collect::<Vec<_>>())?;
        d.set_item("grad_norm_sq", col(&|r| r.grad_norm_sq))?;
        d.set_item("min_grad_norm_sq", col(&|r| r.min_grad_norm_sq))?;
        d.set_item("consensus_sq", col(&|r| r.consensus_sq))?;
        d.set_item("fgap_mean", col(&|r| r.fgap_mean))?;
        d.set_item("fgap_bar", col(&|r| r.fgap_bar))?;
        d.set_item("q_t", col(&|r| r.q_t))?;
        d.set_item("e_norm_sq", col(&|r| r.e_norm_sq))?;
        out.push(d);
    }
    Ok(out)
}

/// Runs a verification suite; returns `(name, passed, measured, tolerance)`.
#[pyfunction]
#[pyo3(signature = (suite="all", abc=None))]
fn verify(suite: &str, abc: Option<&str>) -> PyResult<Vec<(String, bool, f64, f64)>> {
    let suite: Suite = suite.parse().map_err(to_py)?;
    let abc = abc.map(str::parse::<AbcSpec>).transpose().map_err(to_py)?;
    Ok(run_verify(suite, abc.as_ref())
        .into_iter()
        .map(|c| (c.name, c.passed, c.measured, c.tolerance))
        .collect())
}

#[pymodule]
fn rrnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
