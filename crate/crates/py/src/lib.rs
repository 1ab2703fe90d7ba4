//! Python bindings for the cnoidal wave library.

use cnoidal::elliptic::{complete_elliptic as elliptic_pair, Modulus};
use cnoidal::evolution::{run_experiment, ExperimentConfig, Perturbation};
use cnoidal::index::{self, IndexReport, DEFAULT_IVP_STEPS};
use cnoidal::operators::{self, build, OperatorKind, ZeroTol};
use cnoidal::stability::{self, StabilityVerdict, DEFAULT_OPERATOR_SIZE};
use cnoidal::waves::{self, Model, WaveParams};
use cnoidal::CnoidalError;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(cnoidal_py, DomainError, PyValueError);
create_exception!(cnoidal_py, ConsistencyError, PyRuntimeError);

fn py_err(e: CnoidalError) -> PyErr {
    match e {
        CnoidalError::Domain(_) | CnoidalError::BlowUp { .. } => DomainError::new_err(e.to_string()),
        _ => ConsistencyError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for cnoidal::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn modulus(k: f64) -> PyResult<Modulus> {
    Modulus::new(k).py()
}

fn parse_model(model: &str) -> PyResult<Model> {
    match model.to_ascii_lowercase().as_str() {
        "kg" => Ok(Model::Kg),
        "nls" => Ok(Model::Nls),
        other => Err(DomainError::new_err(format!("model must be 'kg' or 'nls', got {other:?}"))),
    }
}

/// A cnoidal wave `phi(x) = A cn(4 K x / L; k)` of either model.
#[pyclass(frozen, name = "Wave")]
struct PyWave {
    inner: WaveParams,
}

#[pymethods]
impl PyWave {
    /// KG traveling wave; `k` must give a real speed at this period.
    #[staticmethod]
    fn kg(period: f64, k: f64) -> PyResult<Self> {
        Ok(PyWave { inner: waves::kg_from_k(period, modulus(k)?).py()? })
    }

    #[staticmethod]
    fn kg_from_speed(period: f64, c: f64) -> PyResult<Self> {
        let k = waves::kg_k_from_c(period, c).py()?;
        let mut inner = waves::kg_from_k(period, k).py()?;
        inner.speed = Some(c);
        Ok(PyWave { inner })
    }

    #[staticmethod]
    fn nls(period: f64, k: f64) -> PyResult<Self> {
        Ok(PyWave { inner: waves::nls_from_k(period, modulus(k)?).py()? })
    }

    #[staticmethod]
    fn nls_from_omega(period: f64, omega: f64) -> PyResult<Self> {
        let k = waves::nls_k_from_omega(period, omega).py()?;
        Ok(PyWave { inner: waves::nls_from_k(period, k).py()? })
    }

    #[getter]
    fn model(&self) -> String {
        self.inner.model.to_string()
    }

    #[getter]
    fn period(&self) -> f64 {
        self.inner.period
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k.value()
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }

    #[getter]
    fn speed(&self) -> Option<f64> {
        self.inner.speed
    }

    #[getter]
    fn amplitude(&self) -> f64 {
        self.inner.amplitude
    }

    fn profile(&self, x: f64) -> f64 {
        self.inner.profile(x)
    }

    /// `(xs, phi)` on the uniform grid of `n` points.
    fn sample(&self, n: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let s = waves::sample(&self.inner, n).py()?;
        Ok((s.xs, s.values))
    }

    fn __repr__(&self) -> String {
        format!(
            "Wave(model={}, period={}, k={}, omega={})",
            self.inner.model,
            self.inner.period,
            self.inner.k.value(),
            self.inner.omega
        )
    }
}

fn operator_kind(wave: &PyWave, op: &str) -> PyResult<OperatorKind> {
    OperatorKind::from_model_op(wave.inner.model, &op.to_ascii_lowercase()).py()
}

fn report_dict<'py>(py: Python<'py>, r: &IndexReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("kind", r.kind.to_string())?;
    d.set_item("unconstrained_n", r.unconstrained_n)?;
    d.set_item("unconstrained_z", r.unconstrained_z)?;
    d.set_item("d_value", r.d_value)?;
    d.set_item("n0", r.n0)?;
    d.set_item("z0", r.z0)?;
    d.set_item("constrained_n", r.constrained_n)?;
    d.set_item("constrained_z", r.constrained_z)?;
    Ok(d)
}

fn verdict_dict<'py>(py: Python<'py>, v: &StabilityVerdict) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("model", v.model.to_string())?;
    d.set_item("period", v.period)?;
    d.set_item("k", v.k)?;
    d.set_item("c", v.c)?;
    d.set_item("omega", v.omega)?;
    d.set_item("dpp", v.dpp)?;
    d.set_item("constrained_n", v.constrained_n)?;
    d.set_item("constrained_z", v.constrained_z)?;
    let reports = v.index.iter().map(|r| report_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
    d.set_item("index", reports)?;
    d.set_item("verdict", format!("{:?}", v.verdict))?;
    d.set_item("reason", &v.reason)?;
    Ok(d)
}

/// `(K(k), E(k))`.
#[pyfunction]
fn complete_elliptic(k: f64) -> PyResult<(f64, f64)> {
    let e = elliptic_pair(modulus(k)?);
    Ok((e.big_k, e.big_e))
}

#[pyfunction]
fn find_kstar() -> f64 {
    index::find_kstar().value()
}

#[pyfunction]
fn find_k1() -> f64 {
    stability::find_k1().value()
}

#[pyfunction]
fn critical_values(py: Python<'_>, period: f64) -> PyResult<Bound<'_, PyDict>> {
    let c = stability::critical_values(period).py()?;
    let d = PyDict::new(py);
    d.set_item("period", c.period)?;
    d.set_item("kstar", c.kstar)?;
    d.set_item("k1", c.k1)?;
    d.set_item("kg_k_min", c.kg_k_min)?;
    d.set_item("cstar", c.cstar)?;
    d.set_item("c_k1", c.c_k1)?;
    d.set_item("omegastar", c.omegastar)?;
    Ok(d)
}

/// Sorted eigenvalues with negative count `n` and kernel dimension `z`.
#[pyfunction]
#[pyo3(signature = (wave, op, n = DEFAULT_OPERATOR_SIZE, constrained = false))]
fn spectrum<'py>(
    py: Python<'py>,
    wave: &PyWave,
    op: &str,
    n: usize,
    constrained: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let m = build(operator_kind(wave, op)?, &wave.inner, n).py()?;
    let tol = ZeroTol::default();
    let r = if constrained {
        operators::constrained_spectrum(&m, tol)
    } else {
        operators::spectrum(&m, tol)
    }
    .py()?;
    let d = PyDict::new(py);
    d.set_item("eigenvalues", r.eigenvalues.clone())?;
    d.set_item("n", r.n_neg)?;
    d.set_item("z", r.z_dim)?;
    d.set_item("zero_tol", r.zero_tol)?;
    Ok(d)
}

/// Constrained counts from the index formula, cross-checked by projection.
#[pyfunction]
#[pyo3(signature = (wave, op, n = DEFAULT_OPERATOR_SIZE))]
fn index_report<'py>(py: Python<'py>, wave: &PyWave, op: &str, n: usize) -> PyResult<Bound<'py, PyDict>> {
    let r = index::index_report(operator_kind(wave, op)?, &wave.inner, n).py()?;
    report_dict(py, &r)
}

/// Closed-form `(L1^{-1} 1, 1)`; defined for every modulus.
#[pyfunction]
fn d1(period: f64, k: f64) -> PyResult<f64> {
    Ok(index::d1_closed_form(period, modulus(k)?).py()?.value)
}

/// `(L3^{-1} 1, 1)` through the periodic Green solve of an NLS wave.
#[pyfunction]
#[pyo3(signature = (wave, steps = DEFAULT_IVP_STEPS))]
fn d3(wave: &PyWave, steps: usize) -> PyResult<f64> {
    Ok(index::d3_via_ivp(&wave.inner, steps).py()?.0.value)
}

#[pyfunction]
fn dpp_c(period: f64, k: f64) -> PyResult<f64> {
    Ok(stability::dpp_c(period, modulus(k)?).py()?.value)
}

/// `(finite_difference, linear_solve)` estimates of `d''(omega)`.
#[pyfunction]
fn dpp_omega(period: f64, omega: f64) -> PyResult<(f64, f64)> {
    let d = stability::dpp_omega(period, omega).py()?;
    Ok((d.finite_difference, d.linear_solve))
}

/// Verdict for a KG speed `c` or an NLS frequency `omega`.
#[pyfunction]
#[pyo3(signature = (model, period, parameter, n = DEFAULT_OPERATOR_SIZE))]
fn verdict<'py>(
    py: Python<'py>,
    model: &str,
    period: f64,
    parameter: f64,
    n: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let v = match parse_model(model)? {
        Model::Kg => stability::verdict_kg(period, parameter, n),
        Model::Nls => stability::verdict_nls(period, parameter, n),
    }
    .py()?;
    verdict_dict(py, &v)
}

/// Perturbed evolution; returns the sampled distance and drift series.
#[pyfunction]
#[pyo3(signature = (model, period, k, eps = 1e-3, horizon = 10.0, dt = None, n = 256, seed = 0, sample_interval = 0.1))]
#[allow(clippy::too_many_arguments)]
fn evolve<'py>(
    py: Python<'py>,
    model: &str,
    period: f64,
    k: f64,
    eps: f64,
    horizon: f64,
    dt: Option<f64>,
    n: usize,
    seed: u64,
    sample_interval: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = ExperimentConfig::new(parse_model(model)?, period, k);
    cfg.perturbation = Perturbation::ZeroMeanRandom;
    cfg.eps = eps;
    cfg.horizon = horizon;
    cfg.dt = dt.unwrap_or(cfg.dt);
    cfg.n = n;
    cfg.seed = seed;
    cfg.sample_interval = sample_interval;
    let r = py.detach(|| run_experiment(&cfg)).py()?;
    let d = PyDict::new(py);
    d.set_item("t", r.series.times.clone())?;
    d.set_item("distance", r.series.distances.clone())?;
    d.set_item("energy_drift", r.energy_drift.clone())?;
    d.set_item("second_invariant_drift", r.second_invariant_drift.clone())?;
    d.set_item("blow_up_t", r.blow_up.as_ref().map(|b| b.t))?;
    d.set_item("growth_factor", r.growth_factor())?;
    Ok(d)
}

#[pymodule]
fn cnoidal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DomainError", m.py().get_type::<DomainError>())?;
    m.add("ConsistencyError", m.py().get_type::<ConsistencyError>())?;
    m.add_class::<PyWave>()?;
    m.add_function(wrap_pyfunction!(complete_elliptic, m)?)?;
    m.add_function(wrap_pyfunction!(find_kstar, m)?)?;
    m.add_function(wrap_pyfunction!(find_k1, m)?)?;
    m.add_function(wrap_pyfunction!(critical_values, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(index_report, m)?)?;
    m.add_function(wrap_pyfunction!(d1, m)?)?;
    m.add_function(wrap_pyfunction!(d3, m)?)?;
    m.add_function(wrap_pyfunction!(dpp_c, m)?)?;
    m.add_function(wrap_pyfunction!(dpp_omega, m)?)?;
    m.add_function(wrap_pyfunction!(verdict, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    Ok(())
}
