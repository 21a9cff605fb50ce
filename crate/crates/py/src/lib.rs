//! Python bindings. The module is importable as `lapden`.

use std::path::PathBuf;

use lapden::experiment::{run_experiment as run_core_experiment, ExperimentConfig, Figure};
use lapden::nl_filter::{self, LambdaRule, Solver, TimeStep};
use lapden::signals::{self, NoiseSpec, Sampled};
use lapden::tv_baseline;
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyTypeError, PyValueError};
use pyo3::prelude::*;

create_exception!(lapden, DivergenceError, PyRuntimeError, "The time stepping produced non-finite values.");

fn to_py(e: lapden::Error) -> PyErr {
    match e {
        lapden::Error::Divergence { .. } => DivergenceError::new_err(e.to_string()),
        lapden::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Signal1D", module = "lapden", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySignal1D {
    inner: lapden::Signal1D,
}

#[pymethods]
impl PySignal1D {
    #[new]
    #[pyo3(signature = (values, h = 1.0))]
    fn new(values: Vec<f64>, h: f64) -> PyResult<Self> {
        Ok(Self { inner: lapden::Signal1D::new(values, h).map_err(to_py)? })
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        self.inner.domain
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Signal1D(len={}, h={})", self.inner.len(), self.inner.h)
    }
}

#[pyclass(name = "Field2D", module = "lapden", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField2D {
    inner: lapden::Field2D,
}

#[pymethods]
impl PyField2D {
    /// Build from a list of equally long rows.
    #[new]
    #[pyo3(signature = (rows, h = 1.0))]
    fn new(rows: Vec<Vec<f64>>, h: f64) -> PyResult<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(PyValueError::new_err("rows have different lengths"));
        }
        let n = rows.len();
        let values = rows.into_iter().flatten().collect();
        Ok(Self { inner: lapden::Field2D::new(values, n, cols, h).map_err(to_py)? })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    /// Row-major flat samples.
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        self.inner.values.chunks(self.inner.cols).map(<[f64]>::to_vec).collect()
    }

    fn __repr__(&self) -> String {
        format!("Field2D({}x{}, h={})", self.inner.rows, self.inner.cols, self.inner.h)
    }
}

/// Nonlinear filter settings. `dt=None` picks the step automatically;
/// setting `delta` switches to the adaptive fidelity weight.
#[pyclass(name = "FilterParams", module = "lapden", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyFilterParams {
    lambda_: f64,
    delta: Option<f64>,
    epsilon: f64,
    p: f64,
    dt: Option<f64>,
    max_iters: usize,
    tol: f64,
    /// "explicit" or "semi-implicit".
    solver: String,
    threads: usize,
}

#[pymethods]
impl PyFilterParams {
    #[new]
    #[pyo3(signature = (
        lambda_ = 1.0, delta = None, epsilon = 1e-2, p = 0.5, dt = None,
        max_iters = 200_000, tol = 1e-6, solver = "explicit".to_string(), threads = 1
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        lambda_: f64,
        delta: Option<f64>,
        epsilon: f64,
        p: f64,
        dt: Option<f64>,
        max_iters: usize,
        tol: f64,
        solver: String,
        threads: usize,
    ) -> Self {
        Self { lambda_, delta, epsilon, p, dt, max_iters, tol, solver, threads }
    }
}

impl PyFilterParams {
    fn to_core(&self) -> PyResult<nl_filter::FilterParams> {
        let solver = match self.solver.as_str() {
            "explicit" => Solver::ExplicitEuler,
            "semi-implicit" => Solver::SemiImplicit,
            other => return Err(PyValueError::new_err(format!("unknown solver {other:?}"))),
        };
        let params = nl_filter::FilterParams {
            lambda: match self.delta {
                Some(d) => LambdaRule::Adaptive { target_delta: d },
                None => LambdaRule::Fixed(self.lambda_),
            },
            epsilon: self.epsilon,
            p: self.p,
            dt: self.dt.map_or(TimeStep::Auto, TimeStep::Fixed),
            max_iters: self.max_iters,
            tol: self.tol,
            solver,
            threads: self.threads,
        };
        params.validate().map_err(to_py)?;
        Ok(params)
    }
}

#[pyclass(name = "TvParams", module = "lapden", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyTvParams {
    lambda_: f64,
    beta: f64,
    dt: Option<f64>,
    max_iters: usize,
    tol: f64,
    threads: usize,
}

#[pymethods]
impl PyTvParams {
    #[new]
    #[pyo3(signature = (lambda_ = 1.0, beta = 1e-6, dt = None, max_iters = 200_000, tol = 1e-6, threads = 1))]
    fn new(lambda_: f64, beta: f64, dt: Option<f64>, max_iters: usize, tol: f64, threads: usize) -> Self {
        Self { lambda_, beta, dt, max_iters, tol, threads }
    }
}

impl PyTvParams {
    fn to_core(&self) -> PyResult<tv_baseline::TvParams> {
        let params = tv_baseline::TvParams {
            lambda: self.lambda_,
            beta: self.beta,
            dt: self.dt.map_or(TimeStep::Auto, TimeStep::Fixed),
            max_iters: self.max_iters,
            tol: self.tol,
            threads: self.threads,
        };
        params.validate().map_err(to_py)?;
        Ok(params)
    }
}

#[pyclass(name = "RunTrace", module = "lapden", frozen, get_all)]
struct PyRunTrace {
    iters_run: usize,
    residual_history: Vec<f64>,
    fidelity_history: Vec<f64>,
    lambda_history: Vec<f64>,
    energy_history: Vec<f64>,
    dt_used: f64,
    converged: bool,
    u0_norm: f64,
    wall_seconds: f64,
}

impl From<nl_filter::RunTrace> for PyRunTrace {
    fn from(t: nl_filter::RunTrace) -> Self {
        Self {
            iters_run: t.iters_run,
            residual_history: t.residual_history,
            fidelity_history: t.fidelity_history,
            lambda_history: t.lambda_history,
            energy_history: t.energy_history,
            dt_used: t.dt_used,
            converged: t.converged,
            u0_norm: t.u0_norm,
            wall_seconds: t.wall_seconds,
        }
    }
}

#[pymethods]
impl PyRunTrace {
    fn __repr__(&self) -> String {
        format!("RunTrace(iters_run={}, converged={})", self.iters_run, self.converged)
    }
}

#[pyclass(name = "Metrics", module = "lapden", frozen, get_all)]
struct PyMetrics {
    rel_err: f64,
    rmse: f64,
    psnr_db: Option<f64>,
    plateau_fraction: f64,
    curvature_mass: f64,
}

impl From<signals::Metrics> for PyMetrics {
    fn from(m: signals::Metrics) -> Self {
        Self {
            rel_err: m.rel_err,
            rmse: m.rmse,
            psnr_db: m.psnr_db,
            plateau_fraction: m.plateau_fraction,
            curvature_mass: m.curvature_mass,
        }
    }
}

fn filter_params(p: Option<PyRef<'_, PyFilterParams>>) -> PyResult<nl_filter::FilterParams> {
    match p {
        Some(p) => p.to_core(),
        None => Ok(nl_filter::FilterParams::default()),
    }
}

fn tv_params(p: Option<PyRef<'_, PyTvParams>>) -> PyResult<tv_baseline::TvParams> {
    match p {
        Some(p) => p.to_core(),
        None => Ok(tv_baseline::TvParams::default()),
    }
}

#[pyfunction]
#[pyo3(signature = (u0, params = None))]
fn denoise_1d(
    py: Python<'_>,
    u0: &PySignal1D,
    params: Option<PyRef<'_, PyFilterParams>>,
) -> PyResult<(PySignal1D, PyRunTrace)> {
    let params = filter_params(params)?;
    let (u, t) = py.detach(|| nl_filter::denoise_1d(&u0.inner, &params)).map_err(to_py)?;
    Ok((PySignal1D { inner: u }, t.into()))
}

#[pyfunction]
#[pyo3(signature = (u0, params = None, warm_start = None))]
fn denoise_2d(
    py: Python<'_>,
    u0: &PyField2D,
    params: Option<PyRef<'_, PyFilterParams>>,
    warm_start: Option<&PyField2D>,
) -> PyResult<(PyField2D, PyRunTrace)> {
    let params = filter_params(params)?;
    let warm = warm_start.map(|w| &w.inner);
    let (u, t) = py.detach(|| nl_filter::denoise_2d(&u0.inner, &params, warm)).map_err(to_py)?;
    Ok((PyField2D { inner: u }, t.into()))
}

#[pyfunction]
#[pyo3(signature = (u0, params = None))]
fn tv_denoise_1d(
    py: Python<'_>,
    u0: &PySignal1D,
    params: Option<PyRef<'_, PyTvParams>>,
) -> PyResult<(PySignal1D, PyRunTrace)> {
    let params = tv_params(params)?;
    let (u, t) = py.detach(|| tv_baseline::tv_denoise_1d(&u0.inner, &params)).map_err(to_py)?;
    Ok((PySignal1D { inner: u }, t.into()))
}

#[pyfunction]
#[pyo3(signature = (u0, params = None))]
fn tv_denoise_2d(
    py: Python<'_>,
    u0: &PyField2D,
    params: Option<PyRef<'_, PyTvParams>>,
) -> PyResult<(PyField2D, PyRunTrace)> {
    let params = tv_params(params)?;
    let (u, t) = py.detach(|| tv_baseline::tv_denoise_2d(&u0.inner, &params)).map_err(to_py)?;
    Ok((PyField2D { inner: u }, t.into()))
}

#[pyfunction]
fn flux(w: f64, epsilon: f64, p: f64) -> f64 {
    nl_filter::flux(w, epsilon, p)
}

#[pyfunction]
fn stable_step_bound(h: f64, epsilon: f64, p: f64, lambda_: f64) -> f64 {
    nl_filter::stable_step_bound(h, epsilon, p, lambda_)
}

#[pyfunction]
fn sample_f_sine(n: usize) -> PyResult<PySignal1D> {
    Ok(PySignal1D { inner: signals::sample_f_sine(n).map_err(to_py)? })
}

#[pyfunction]
fn sample_g_jumps(n: usize) -> PyResult<PySignal1D> {
    Ok(PySignal1D { inner: signals::sample_g_jumps(n).map_err(to_py)? })
}

#[pyfunction]
fn sample_f2d(n: usize) -> PyResult<PyField2D> {
    Ok(PyField2D { inner: signals::sample_f2d(n).map_err(to_py)? })
}

#[pyfunction]
fn gaussian_noise(len: usize, seed: u64) -> Vec<f64> {
    signals::gaussian_noise(len, seed)
}

/// Add noise with `||noisy - clean|| / ||clean|| == delta_rel` to a
/// `Signal1D` or `Field2D`.
#[pyfunction]
fn add_noise(py: Python<'_>, clean: &Bound<'_, PyAny>, seed: u64, delta_rel: f64) -> PyResult<Py<PyAny>> {
    let spec = NoiseSpec { seed, delta_rel };
    if let Ok(s) = clean.cast::<PySignal1D>() {
        let inner = signals::add_noise(&s.get().inner, &spec).map_err(to_py)?;
        return Ok(Py::new(py, PySignal1D { inner })?.into_any());
    }
    if let Ok(f) = clean.cast::<PyField2D>() {
        let inner = signals::add_noise(&f.get().inner, &spec).map_err(to_py)?;
        return Ok(Py::new(py, PyField2D { inner })?.into_any());
    }
    Err(PyTypeError::new_err("expected Signal1D or Field2D"))
}

fn metrics_of<T: Sampled>(u: &T, reference: &T, tau: Option<f64>) -> PyResult<PyMetrics> {
    let tau = tau.unwrap_or_else(|| signals::default_tau(reference));
    Ok(signals::compute_metrics(u, reference, tau).map_err(to_py)?.into())
}

/// Metrics of `u` against `reference`; `tau` defaults to a tenth of the
/// reference's mean absolute first difference.
#[pyfunction]
#[pyo3(signature = (u, reference, tau = None))]
fn compute_metrics(u: &Bound<'_, PyAny>, reference: &Bound<'_, PyAny>, tau: Option<f64>) -> PyResult<PyMetrics> {
    if let (Ok(a), Ok(b)) = (u.cast::<PySignal1D>(), reference.cast::<PySignal1D>()) {
        return metrics_of(&a.get().inner, &b.get().inner, tau);
    }
    if let (Ok(a), Ok(b)) = (u.cast::<PyField2D>(), reference.cast::<PyField2D>()) {
        return metrics_of(&a.get().inner, &b.get().inner, tau);
    }
    Err(PyTypeError::new_err("expected two Signal1D or two Field2D values"))
}

/// Run an experiment figure; returns the JSON-lines reports.
#[pyfunction]
#[pyo3(signature = (name, seed = 1, n = None, outdir = PathBuf::from("out"), threads = 1))]
fn run_experiment(
    py: Python<'_>,
    name: &str,
    seed: u64,
    n: Option<usize>,
    outdir: PathBuf,
    threads: usize,
) -> PyResult<Vec<String>> {
    let fig: Figure = name.parse().map_err(to_py)?;
    let cfg = ExperimentConfig { seed, n, outdir, threads };
    let out = py.detach(|| run_core_experiment(fig, &cfg)).map_err(to_py)?;
    out.reports.iter().map(|r| r.to_json_line().map_err(to_py)).collect()
}

#[pymodule]
#[pyo3(name = "lapden")]
fn lapden_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySignal1D>()?;
    m.add_class::<PyField2D>()?;
    m.add_class::<PyFilterParams>()?;
    m.add_class::<PyTvParams>()?;
    m.add_class::<PyRunTrace>()?;
    m.add_class::<PyMetrics>()?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    m.add_function(wrap_pyfunction!(denoise_1d, m)?)?;
    m.add_function(wrap_pyfunction!(denoise_2d, m)?)?;
    m.add_function(wrap_pyfunction!(tv_denoise_1d, m)?)?;
    m.add_function(wrap_pyfunction!(tv_denoise_2d, m)?)?;
    m.add_function(wrap_pyfunction!(flux, m)?)?;
    m.add_function(wrap_pyfunction!(stable_step_bound, m)?)?;
    m.add_function(wrap_pyfunction!(sample_f_sine, m)?)?;
    m.add_function(wrap_pyfunction!(sample_g_jumps, m)?)?;
    m.add_function(wrap_pyfunction!(sample_f2d, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_noise, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
