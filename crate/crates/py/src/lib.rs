use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vanishing_diffeo::cli::{classify as classify_regime, ScheduleKind};
use vanishing_diffeo::construction::{build_run, state_grid, ConstructionParams, Pricing, Strategy, TargetSpec, DEFAULT_SLOPE};
use vanishing_diffeo::field_norms::{self, NormMethod, NormOptions};
use vanishing_diffeo::grid::{GridSpec, ScalarField};
use vanishing_diffeo::oracle;

create_exception!(pyvanishing, VanishingError, PyException);

fn err(e: vanishing_diffeo::Error) -> PyErr {
    VanishingError::new_err(e.to_string())
}

fn field(values: Vec<f64>, shape: Vec<usize>, lo: Vec<f64>, hi: Vec<f64>) -> PyResult<ScalarField> {
    let grid = GridSpec::new(lo, hi, shape).map_err(err)?;
    let support = grid.bounding_box();
    ScalarField::new(grid, values, support).map_err(err)
}

/// `W^{s,p}` norm of a row-major grid field (last axis fastest).
#[pyfunction]
#[pyo3(signature = (values, shape, lo, hi, s, p, method = "interpolation_bound", seed = 0))]
#[allow(clippy::too_many_arguments)]
fn wsp_norm<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    shape: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    s: f64,
    p: f64,
    method: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let f = field(values, shape, lo, hi)?;
    let method: NormMethod = method.parse().map_err(err)?;
    let opts = NormOptions {
        seed,
        ..NormOptions::default()
    };
    let r = field_norms::wsp_norm(&f, s, p, method, &opts).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("lp", r.lp)?;
    d.set_item("w1p", r.w1p)?;
    d.set_item("gagliardo_seminorm", r.gagliardo_seminorm)?;
    d.set_item("wsp", r.wsp)?;
    d.set_item("stderr", r.estimator_stderr)?;
    d.set_item("method", r.method.as_str())?;
    Ok(d)
}

/// The quadratic reference sum for the Gagliardo seminorm (to the power `p`).
#[pyfunction]
fn brute_seminorm(values: Vec<f64>, shape: Vec<usize>, lo: Vec<f64>, hi: Vec<f64>, s: f64, p: f64) -> PyResult<f64> {
    let f = field(values, shape, lo, hi)?;
    oracle::brute_seminorm(&f, s, p).map_err(err)
}

/// `vanishing`, `positive` or `borderline`.
#[pyfunction]
fn classify(s: f64, p: f64, dim: usize) -> &'static str {
    classify_regime(s, p, dim).as_str()
}

/// `(α, λ, δ)` at `k`.
#[pyfunction]
#[pyo3(signature = (k, schedule = "paper", moderate_c = 2.0))]
fn schedule(k: usize, schedule: &str, moderate_c: f64) -> PyResult<(f64, f64, f64)> {
    let kind: ScheduleKind = schedule.parse().map_err(err)?;
    Ok(kind.schedule(moderate_c).evaluate(k))
}

/// Builds and prices the construction for the default bump target.
#[pyfunction]
#[pyo3(signature = (k, dim = 2, s = 0.5, p = 2.0, strategy = "flow2d", schedule = "paper", moderate_c = 2.0, verify = false))]
#[allow(clippy::too_many_arguments)]
fn run_construction<'py>(
    py: Python<'py>,
    k: usize,
    dim: usize,
    s: f64,
    p: f64,
    strategy: &str,
    schedule: &str,
    moderate_c: f64,
    verify: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let strategy: Strategy = strategy.parse().map_err(err)?;
    let kind: ScheduleKind = schedule.parse().map_err(err)?;
    let (run, certs) = py
        .detach(|| {
            let params = ConstructionParams::with_schedule(k, dim, s, p, strategy, kind.schedule(moderate_c))?;
            let target = TargetSpec::bump(state_grid(&params)?, DEFAULT_SLOPE)?;
            let run = build_run(&target, &params, &Pricing::default())?;
            let certs = if verify { oracle::verify_bounds(&run, None)? } else { vec![] };
            Ok((run, certs))
        })
        .map_err(err)?;
    let b = run.breakdown();
    let d = PyDict::new(py);
    d.set_item("alpha", run.params.alpha)?;
    d.set_item("lambda", run.params.lambda)?;
    d.set_item("delta", run.params.delta)?;
    d.set_item("cost_squeeze", b.squeeze)?;
    d.set_item("cost_transport", b.transport)?;
    d.set_item("cost_correct", b.correct)?;
    d.set_item("cost_total", b.total)?;
    d.set_item("endpoint_error", run.endpoint_error)?;
    d.set_item("admissible", run.params.admissibility.admissible)?;
    d.set_item("pieces", run.pieces.len())?;
    let list = certs
        .iter()
        .map(|c| {
            let e = PyDict::new(py);
            e.set_item("name", &c.name)?;
            e.set_item("measured", c.measured)?;
            e.set_item("bound", c.bound)?;
            e.set_item("passed", c.passed)?;
            Ok(e)
        })
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("certificates", list)?;
    Ok(d)
}

#[pymodule]
fn pyvanishing(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VanishingError", m.py().get_type::<VanishingError>())?;
    m.add_function(wrap_pyfunction!(wsp_norm, m)?)?;
    m.add_function(wrap_pyfunction!(brute_seminorm, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(run_construction, m)?)?;
    Ok(())
}
