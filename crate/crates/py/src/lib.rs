//! Python bindings: knee detection, rolling means and the CLI pipeline.

use std::path::PathBuf;

use chainscope::analysis::{self, TrendClassification};
use chainscope::model::{Architecture, ExperimentConfig};
use chainscope::report::{self, CliError};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: CliError) -> PyErr {
    match e {
        CliError::Config(m) => PyValueError::new_err(m),
        CliError::Io(m) => PyOSError::new_err(m),
        CliError::Analysis(m) => PyRuntimeError::new_err(m),
    }
}

fn config(arch: &str, path: Option<PathBuf>, seed: Option<u64>) -> PyResult<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(&p).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => ExperimentConfig::default_for(arch.parse::<Architecture>().map_err(PyValueError::new_err)?),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn classification<'py>(py: Python<'py>, c: &TrendClassification) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("trend", c.trend.as_str())?;
    d.set_item("knee_x", c.knee_x)?;
    d.set_item("breakpoint", c.breakpoint)?;
    d.set_item("slope_before", c.slope_before)?;
    d.set_item("slope_after", c.slope_after)?;
    d.set_item("nrmse", c.nrmse)?;
    Ok(d)
}

/// Classifies a rate curve given as (x, y) pairs.
#[pyfunction]
fn detect_knee<'py>(py: Python<'py>, points: Vec<(f64, f64)>) -> PyResult<Bound<'py, PyDict>> {
    let c = analysis::detect_knee(&points).map_err(|e| PyValueError::new_err(e.to_string()))?;
    classification(py, &c)
}

#[pyfunction]
fn rolling_mean(points: Vec<(f64, f64)>, window_s: usize) -> PyResult<Vec<(f64, f64)>> {
    analysis::rolling_mean(&points, window_s).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Full sweep into `out`; returns the report path, CSV path and top candidate.
#[pyfunction]
#[pyo3(signature = (out, arch = "fabric", config_path = None, seed = None))]
fn run<'py>(
    py: Python<'py>,
    out: PathBuf,
    arch: &str,
    config_path: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config(arch, config_path, seed)?;
    let o = py.detach(|| report::cmd_run(&cfg, &out, None)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("report", o.report)?;
    d.set_item("csv", o.csv)?;
    d.set_item("figures", o.figures)?;
    d.set_item("top", o.analysis.bottleneck.top().map(|c| c.to_string()))?;
    d.set_item("summary", o.analysis.bottleneck.summary)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (csv, out, arch = "fabric", config_path = None))]
fn analyze(py: Python<'_>, csv: PathBuf, out: PathBuf, arch: &str, config_path: Option<PathBuf>) -> PyResult<PathBuf> {
    let cfg = config(arch, config_path, None)?;
    py.detach(|| report::cmd_analyze(&csv, &cfg, &out, None)).map(|o| o.report).map_err(py_err)
}

/// One rate step; returns the CSV path.
#[pyfunction]
#[pyo3(signature = (rate, out, arch = "fabric", seed = None))]
fn simulate(py: Python<'_>, rate: f64, out: PathBuf, arch: &str, seed: Option<u64>) -> PyResult<PathBuf> {
    let cfg = config(arch, None, seed)?;
    py.detach(|| report::cmd_simulate(&cfg, rate, &out)).map_err(py_err)
}

#[pymodule]
fn chainscope_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(detect_knee, m)?)?;
    m.add_function(wrap_pyfunction!(rolling_mean, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
