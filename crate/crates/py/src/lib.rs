//! Python bindings. Results come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use engine::data::{load_dataset as load, write_dataset, Schema};
use engine::error::Error;
use engine::household::{structural, test_battery, BatteryOptions, ModelKind};
use engine::mte::{heterogeneity_tests, mte_bootstrap, MteBootstrap, MteMethod, MteSpec, PropensitySpec};
use engine::pipeline::{self, PipelineConfig};
use engine::simgen::{generate, SimConfig, TruthKind};

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Round-trip through JSON so every serializable result becomes a Python object.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

/// An immutable set of households.
#[pyclass(frozen, module = "bargain_lab")]
struct Dataset {
    inner: engine::data::Dataset,
}

#[pymethods]
impl Dataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset({} households)", self.inner.len())
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        write_dataset(&self.inner, path).map_err(py_err)
    }

    /// Households as a list of dicts.
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.records())
    }

    fn covariate_names(&self) -> Vec<String> {
        self.inner.covariate_names()
    }
}

#[pyfunction]
#[pyo3(signature = (path))]
fn load_dataset(path: PathBuf) -> PyResult<Dataset> {
    Ok(Dataset {
        inner: load(path, &Schema::default()).map_err(py_err)?,
    })
}

/// Synthetic households. Returns the dataset and the truth parameters (or None).
#[pyfunction]
#[pyo3(signature = (n=2000, seed=0, truth="collective", reveal_student_wages=false))]
fn simulate<'py>(
    py: Python<'py>,
    n: usize,
    seed: u64,
    truth: &str,
    reveal_student_wages: bool,
) -> PyResult<(Dataset, Bound<'py, PyAny>)> {
    let cfg = SimConfig {
        n,
        seed,
        truth: truth.parse::<TruthKind>().map_err(py_err)?,
        reveal_student_wages,
        ..SimConfig::default()
    };
    let (d, ledger) = py.detach(|| generate(&cfg)).map_err(py_err)?;
    Ok((Dataset { inner: d }, to_py(py, &ledger.household)?))
}

/// Fit the unrestricted model and test each restriction against it.
#[pyfunction]
#[pyo3(signature = (data, label="all", kinds=vec!["unitary".to_string(), "collective".to_string()], control_function=true, nodes=16, level=0.05))]
fn fit_battery<'py>(
    py: Python<'py>,
    data: &Dataset,
    label: &str,
    kinds: Vec<String>,
    control_function: bool,
    nodes: usize,
    level: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut opts = BatteryOptions {
        level,
        ..BatteryOptions::default()
    };
    opts.spec.control_function = control_function;
    opts.spec.nodes = nodes;
    opts.restricted = kinds
        .iter()
        .map(|k| k.parse::<ModelKind>().map_err(py_err))
        .collect::<PyResult<_>>()?;
    let rep = py.detach(|| test_battery(&data.inner, label, &opts));
    let out = to_py(py, &rep)?;
    out.set_item("verdict_text", rep.verdict.describe())?;
    Ok(out)
}

/// MTE curve with bootstrap bands and the two heterogeneity tests.
#[pyfunction]
#[pyo3(signature = (data, outcome="parent_market_hours", covariates=None, instrument="instrument", method="parametric", replications=250, seed=7, bandwidth=None))]
#[allow(clippy::too_many_arguments)]
fn mte<'py>(
    py: Python<'py>,
    data: &Dataset,
    outcome: &str,
    covariates: Option<Vec<String>>,
    instrument: &str,
    method: &str,
    replications: usize,
    seed: u64,
    bandwidth: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let method = match method {
        "parametric" => MteMethod::ParametricDeg1,
        "semiparametric" => MteMethod::SemiparametricDeg2,
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    let mut spec = MteSpec {
        outcome: outcome.to_string(),
        method,
        bandwidth,
        ..MteSpec::default()
    };
    let mut pspec = PropensitySpec {
        instrument: instrument.to_string(),
        ..PropensitySpec::default()
    };
    if let Some(c) = covariates {
        spec.covariates = c.clone();
        pspec.covariates = c;
    }
    let boot = MteBootstrap { replications, seed };
    let (curve, tests) = py
        .detach(|| -> engine::error::Result<_> {
            let run = mte_bootstrap(&data.inner, &pspec, &spec, &boot)?;
            let t = heterogeneity_tests(&run.curve, &run.fits, Some(&run.boot))?;
            Ok((run.curve, t))
        })
        .map_err(py_err)?;
    let out = to_py(py, &curve)?;
    out.set_item("tests", to_py(py, &tests)?)?;
    out.set_item("slope_in_normal_quantile", curve.slope_in_normal_quantile())?;
    Ok(out)
}

/// F′ and the sharing-rule slopes from (a_t, a_y), A_y and the frontier.
#[pyfunction]
#[pyo3(signature = (at_s, ay_s, ay, gamma_p, gamma_y, near=None))]
fn solve_sharing<'py>(
    py: Python<'py>,
    at_s: f64,
    ay_s: f64,
    ay: f64,
    gamma_p: f64,
    gamma_y: f64,
    near: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let s = structural::solve_sharing(at_s, ay_s, ay, gamma_p, gamma_y, near).map_err(py_err)?;
    to_py(py, &s)
}

/// (γ_p, γ_y) from the schooling-index coefficients.
#[pyfunction]
fn reservation_wage(bt: f64, bp: f64, by: f64) -> PyResult<(f64, f64)> {
    let cov = nalgebra::DMatrix::zeros(3, 3);
    let r = structural::reservation_wage(bt, bp, by, &cov).map_err(py_err)?;
    Ok((r.gamma_p, r.gamma_y))
}

#[pyfunction]
fn lr_test<'py>(py: Python<'py>, restricted: f64, unrestricted: f64, df: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &structural::lr_from_logliks(restricted, unrestricted, df).map_err(py_err)?)
}

/// Run the whole pipeline from a TOML config. Returns the manifest path.
#[pyfunction]
#[pyo3(signature = (config, output_dir=None))]
fn run_pipeline(py: Python<'_>, config: PathBuf, output_dir: Option<PathBuf>) -> PyResult<PathBuf> {
    let mut cfg = PipelineConfig::load(&config).map_err(py_err)?;
    if let Some(o) = output_dir {
        cfg.output_dir = o;
    }
    let s = py.detach(|| pipeline::run(&cfg, Some(&config))).map_err(py_err)?;
    Ok(s.manifest)
}

#[pymodule]
fn bargain_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_battery, m)?)?;
    m.add_function(wrap_pyfunction!(mte, m)?)?;
    m.add_function(wrap_pyfunction!(solve_sharing, m)?)?;
    m.add_function(wrap_pyfunction!(reservation_wage, m)?)?;
    m.add_function(wrap_pyfunction!(lr_test, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
