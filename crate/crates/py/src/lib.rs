//! Python bindings: list, run and report scenarios, and fit decay rates.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use adaptor_lab::scenario::{self, library, runner};
use adaptor_lab::series::{fit_decay_rate as fit, ObservableSeries};
use adaptor_lab::LabError;

/// Plain-Rust outcome of a run, converted to a dict at the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub status: String,
    pub exit_code: i32,
    pub dir: PathBuf,
    pub validity_window: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

pub fn run_summary(config: &str, out_dir: &Path, grid_n: Option<usize>, tmax: Option<f64>) -> adaptor_lab::Result<RunSummary> {
    let config = library::load_scenario(config).and_then(|c| runner::with_overrides(c, grid_n, tmax))?;
    let artifact = scenario::run_scenario(&config, out_dir)?;
    let m = &artifact.manifest;
    Ok(RunSummary {
        run_id: m.run_id.clone(),
        status: format!("{:?}", m.status),
        exit_code: m.exit_code,
        dir: artifact.dir.clone(),
        validity_window: m.validity_window,
        warnings: m.warnings.clone(),
    })
}

fn to_py(e: LabError) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Shipped scenarios as (name, description) pairs.
#[pyfunction]
fn list_scenarios() -> Vec<(String, String)> {
    scenario::list_scenarios()
}

/// Run a scenario file or shipped scenario name; returns a summary dict.
#[pyfunction]
#[pyo3(signature = (config, out_dir = "runs".to_string(), grid_n = None, tmax = None))]
fn run_scenario<'py>(
    py: Python<'py>,
    config: &str,
    out_dir: String,
    grid_n: Option<usize>,
    tmax: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let s = run_summary(config, Path::new(&out_dir), grid_n, tmax).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("run_id", s.run_id)?;
    d.set_item("status", s.status)?;
    d.set_item("exit_code", s.exit_code)?;
    d.set_item("dir", s.dir.to_string_lossy().into_owned())?;
    d.set_item("validity_window", s.validity_window)?;
    d.set_item("warnings", s.warnings)?;
    Ok(d)
}

/// Rendered summary of a stored run.
#[pyfunction]
#[pyo3(signature = (run_id, out_dir = "runs".to_string()))]
fn report(run_id: &str, out_dir: String) -> PyResult<String> {
    scenario::report(Path::new(&out_dir), run_id).map_err(to_py)
}

/// Log-log slope of `values` against `times`: (slope, width, samples).
#[pyfunction]
#[pyo3(signature = (times, values, window = None))]
fn fit_decay_rate(times: Vec<f64>, values: Vec<f64>, window: Option<(f64, f64)>) -> PyResult<(f64, f64, usize)> {
    let series = ObservableSeries::new("python", times, values).map_err(to_py)?;
    let f = fit(&series, window).map_err(to_py)?;
    Ok((f.slope, f.width, f.samples))
}

#[pymodule]
fn adaptor_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay_rate, m)?)?;
    Ok(())
}
