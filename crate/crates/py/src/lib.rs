//! Python module `gasmix`: scenario steady states, simulations and the
//! per-point interface measures, taking TOML documents as strings.

use std::collections::BTreeMap;

use gasmix_core::analysis::interface::{chaotic_point, monotonic_point, periodic_point};
use gasmix_core::analysis::SweepConfig;
use gasmix_core::scenario::Scenario;
use gasmix_core::sim;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: gasmix_core::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn scenario(text: &str) -> PyResult<Scenario> {
    Scenario::parse(text).map_err(to_py)
}

fn sweep(text: &str) -> PyResult<SweepConfig> {
    SweepConfig::parse(text).map_err(to_py)
}

/// Steady state at t = 0: node id -> {quantity: value}.
#[pyfunction]
fn steady(py: Python<'_>, scenario_toml: &str) -> PyResult<BTreeMap<String, BTreeMap<String, f64>>> {
    let s = scenario(scenario_toml)?;
    let values = py.detach(|| sim::steady(&s)).map_err(to_py)?;
    Ok(values
        .into_iter()
        .map(|(id, v)| (id, sim::Quantity::ALL.iter().map(|q| (q.to_string(), v.get(*q))).collect()))
        .collect())
}

/// Simulate from the steady state. Returns `(t_hr, {"node.quantity": values})`.
#[pyfunction]
fn simulate(py: Python<'_>, scenario_toml: &str) -> PyResult<(Vec<f64>, BTreeMap<String, Vec<f64>>)> {
    let s = scenario(scenario_toml)?;
    let run = py.detach(|| sim::simulate(&s)).map_err(to_py)?;
    let series = run.series;
    Ok((series.t_hr, series.names.into_iter().zip(series.values).collect()))
}

/// Crossing flags per configured quantity at one forcing point.
#[pyfunction]
fn monotonic(py: Python<'_>, sweep_toml: &str, omega: f64, kappa: f64) -> PyResult<Vec<bool>> {
    let cfg = sweep(sweep_toml)?;
    py.detach(|| monotonic_point(&cfg, omega, kappa)).map_err(to_py)
}

/// Outlet pressure power measure at one forcing point.
#[pyfunction]
fn periodic(py: Python<'_>, sweep_toml: &str, omega: f64, kappa: f64) -> PyResult<f64> {
    let cfg = sweep(sweep_toml)?;
    py.detach(|| periodic_point(&cfg, omega, kappa).map(|r| r.1)).map_err(to_py)
}

/// Divergence measure between the two chaos trajectories at one forcing point.
#[pyfunction]
fn chaotic(py: Python<'_>, sweep_toml: &str, omega: f64, kappa: f64) -> PyResult<f64> {
    let cfg = sweep(sweep_toml)?;
    py.detach(|| chaotic_point(&cfg, omega, kappa)).map_err(to_py)
}

#[pymodule]
fn gasmix(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(steady, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(monotonic, m)?)?;
    m.add_function(wrap_pyfunction!(periodic, m)?)?;
    m.add_function(wrap_pyfunction!(chaotic, m)?)?;
    Ok(())
}
