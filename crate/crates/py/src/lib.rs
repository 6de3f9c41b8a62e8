//! Python bindings. Vectors are lists of floats, matrices are lists of rows,
//! poses are `(x, y, theta)` tuples and centerlines are lists of `(u, v)` points.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rodservo::akf::{self, AkfConfig, FilterState, Measurement};
use rodservo::feature::{self, FeatureModel};
use rodservo::mfac::{self, ControllerContext, ControllerWeights};
use rodservo::servo::{self, RunConfig, RunOutcome, RunSummary, StepRecord};
use rodservo::world::{self, Centerline, EffectorPose, WorldConfig};
use rodservo::Error;

type Pose = (f64, f64, f64);
type Point = (f64, f64);

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::NumericalFailure { .. } | Error::SingularGain | Error::AtStep { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector3(v: &[f64], what: &str) -> PyResult<Vector3<f64>> {
    match v {
        [a, b, c] => Ok(Vector3::new(*a, *b, *c)),
        _ => Err(PyValueError::new_err(format!("{what} must have 3 components, got {}", v.len()))),
    }
}

fn pose((x, y, t): Pose) -> EffectorPose {
    EffectorPose::new(x, y, t)
}

fn pose_tuple(p: &EffectorPose) -> Pose {
    (p.x, p.y, p.theta)
}

fn points(c: &Centerline) -> Vec<Point> {
    c.points().iter().map(|p| (p.x, p.y)).collect()
}

fn centerline(pts: &[Point]) -> PyResult<Centerline> {
    Centerline::new(pts.iter().map(|&(u, v)| Vector2::new(u, v)).collect()).map_err(err)
}

fn world_of(config: Option<&PyRunConfig>) -> WorldConfig {
    config.map_or_else(WorldConfig::default, |c| c.inner.world.clone())
}

fn akf_of(config: Option<&PyRunConfig>) -> AkfConfig {
    config.map_or_else(AkfConfig::default, |c| c.inner.akf.clone())
}

/// Run configuration parsed from flat `section.key = value` text.
#[pyclass(name = "RunConfig", skip_from_py_object)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::from_toml_str(text).map_err(err)?,
        })
    }

    /// Reads a file; relative paths inside it resolve against its directory.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::load(path).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_flat_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.run.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.run.seed = seed;
    }

    #[getter]
    fn max_steps(&self) -> usize {
        self.inner.run.max_steps
    }

    #[setter]
    fn set_max_steps(&mut self, n: usize) -> PyResult<()> {
        if n == 0 {
            return Err(PyValueError::new_err("max_steps must be at least 1"));
        }
        self.inner.run.max_steps = n;
        Ok(())
    }

    #[getter]
    fn log_path(&self) -> String {
        self.inner.run.log_path.display().to_string()
    }

    #[setter]
    fn set_log_path(&mut self, path: &str) {
        self.inner.run.log_path = path.into();
    }

    #[getter]
    fn feature_model_path(&self) -> String {
        self.inner.run.feature_model_path.display().to_string()
    }

    #[setter]
    fn set_feature_model_path(&mut self, path: &str) {
        self.inner.run.feature_model_path = path.into();
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(seed={}, max_steps={})", self.inner.run.seed, self.inner.run.max_steps)
    }
}

/// PCA projection from centerlines to shape features.
#[pyclass(name = "FeatureModel", skip_from_py_object)]
struct PyFeatureModel {
    inner: FeatureModel,
}

#[pymethods]
impl PyFeatureModel {
    /// Generates a random-walk dataset in the configured world and fits `p` components.
    #[staticmethod]
    #[pyo3(signature = (config = None, samples = feature::DEFAULT_DATASET_SIZE, seed = 0, p = feature::DEFAULT_FEATURE_DIM))]
    fn fit(py: Python<'_>, config: Option<&PyRunConfig>, samples: usize, seed: u64, p: usize) -> PyResult<Self> {
        let world = world_of(config);
        let inner = py
            .detach(|| {
                let data = feature::generate_dataset(&world, samples, seed)?;
                feature::fit_feature_model(&data, p)
            })
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: feature::load_model(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        feature::save_model(&self.inner, path).map_err(err)
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points()
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().iter().copied().collect()
    }

    #[getter]
    fn projection(&self) -> Vec<Vec<f64>> {
        rows(self.inner.projection())
    }

    fn extract(&self, centerline_points: Vec<Point>) -> PyResult<Vec<f64>> {
        let c = centerline(&centerline_points)?;
        Ok(feature::extract_feature(&c, &self.inner).map_err(err)?.iter().copied().collect())
    }

    fn reconstruct(&self, s: Vec<f64>) -> PyResult<Vec<Point>> {
        let v = self.inner.reconstruct(&DVector::from_vec(s)).map_err(err)?;
        Ok(v.as_slice().chunks(2).map(|c| (c[0], c[1])).collect())
    }
}

#[pyfunction]
#[pyo3(signature = (pose_xyt, config = None))]
fn render_centerline(pose_xyt: Pose, config: Option<&PyRunConfig>) -> PyResult<Vec<Point>> {
    let c = world::render_centerline(&pose(pose_xyt), &world_of(config)).map_err(err)?;
    Ok(points(&c))
}

/// Returns `(new_pose, applied_command, clamped)`.
#[pyfunction]
#[pyo3(signature = (pose_xyt, du, config = None))]
fn apply_command(pose_xyt: Pose, du: Vec<f64>, config: Option<&PyRunConfig>) -> PyResult<(Pose, Vec<f64>, bool)> {
    let du = vector3(&du, "du")?;
    let out = world::apply_command(&pose(pose_xyt), &du, &world_of(config)).map_err(err)?;
    Ok((pose_tuple(&out.pose), out.applied.iter().copied().collect(), out.clamped))
}

/// Central-difference Jacobian of the noise-free feature map.
#[pyfunction]
#[pyo3(signature = (pose_xyt, model, config = None, h = world::DEFAULT_ORACLE_STEP))]
fn oracle_jacobian(pose_xyt: Pose, model: &PyFeatureModel, config: Option<&PyRunConfig>, h: f64) -> PyResult<Vec<Vec<f64>>> {
    let w = world_of(config);
    let mut clean = feature::CleanFeatures {
        world: &w,
        model: &model.inner,
    };
    let j = world::oracle_jacobian(&pose(pose_xyt), &mut clean, &w.workspace, h).map_err(err)?;
    Ok(rows(&j))
}

/// Adaptive Kalman estimator of a deformation Jacobian.
#[pyclass(name = "AdaptiveKalmanFilter", skip_from_py_object)]
struct PyFilter {
    state: FilterState,
    config: AkfConfig,
}

#[pymethods]
impl PyFilter {
    #[new]
    #[pyo3(signature = (jacobian, config = None))]
    fn new(jacobian: Vec<Vec<f64>>, config: Option<&PyRunConfig>) -> PyResult<Self> {
        let j = matrix(&jacobian)?;
        if j.is_empty() {
            return Err(PyValueError::new_err("jacobian must be non-empty"));
        }
        let config = akf_of(config);
        Ok(Self {
            state: FilterState::from_jacobian(&j, &config),
            config,
        })
    }

    /// One update with a pose increment and the feature increment it caused.
    fn update<'py>(&mut self, py: Python<'py>, du: Vec<f64>, ds: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let m = Measurement {
            du: DVector::from_vec(du),
            ds: DVector::from_vec(ds),
        };
        let (next, diag) = akf::update(&self.state, &m, &self.config).map_err(err)?;
        self.state = next;
        let d = PyDict::new(py);
        d.set_item("step", diag.step)?;
        d.set_item("residual", diag.residual.as_slice().to_vec())?;
        d.set_item("delta_eps", diag.delta_eps)?;
        d.set_item("alpha_raw", diag.alpha_raw)?;
        d.set_item("alpha", diag.alpha)?;
        d.set_item("d", diag.d)?;
        d.set_item("trace_p", diag.trace_p)?;
        d.set_item("skipped", diag.skipped)?;
        Ok(d)
    }

    #[getter]
    fn jacobian(&self) -> Vec<Vec<f64>> {
        rows(&akf::current_jacobian(&self.state))
    }

    #[getter]
    fn p(&self) -> Vec<Vec<f64>> {
        rows(&self.state.p)
    }

    #[getter]
    fn r_hat(&self) -> Vec<Vec<f64>> {
        rows(&self.state.r_hat)
    }

    #[getter]
    fn q_hat(&self) -> Vec<Vec<f64>> {
        rows(&self.state.q_hat)
    }

    #[getter]
    fn k(&self) -> u64 {
        self.state.k
    }
}

#[pyfunction]
#[pyo3(signature = (delta_eps, config = None))]
fn adaptive_factor(delta_eps: f64, config: Option<&PyRunConfig>) -> f64 {
    akf::adaptive_factor(delta_eps, &akf_of(config))
}

#[pyfunction]
#[pyo3(signature = (delta_eps, config = None))]
fn compute_adaptive_factor(delta_eps: f64, config: Option<&PyRunConfig>) -> f64 {
    akf::compute_adaptive_factor(delta_eps, &akf_of(config))
}

#[pyfunction]
fn correction_factor(k: u64, b: f64) -> f64 {
    akf::correction_factor(k, b)
}

#[pyfunction]
fn build_observation_matrix(du: Vec<f64>, p: usize) -> Vec<Vec<f64>> {
    rows(&akf::build_observation_matrix(&DVector::from_vec(du), p))
}

fn weights(w: Option<[f64; 7]>) -> PyResult<ControllerWeights> {
    match w {
        Some(raw) => ControllerWeights::new(raw).map_err(err),
        None => Ok(ControllerWeights::default()),
    }
}

fn context(
    s_prev: Vec<f64>,
    s_star: Vec<f64>,
    r_prev: Vec<f64>,
    u_prev: Vec<f64>,
    j_k: Vec<Vec<f64>>,
    j_prev: Vec<Vec<f64>>,
) -> PyResult<ControllerContext> {
    let ctx = ControllerContext {
        s_prev: DVector::from_vec(s_prev),
        s_star: DVector::from_vec(s_star),
        r_prev: vector3(&r_prev, "r_prev")?,
        u_prev: vector3(&u_prev, "u_prev")?,
        j_k: matrix(&j_k)?,
        j_prev: matrix(&j_prev)?,
    };
    ctx.check().map_err(err)?;
    Ok(ctx)
}

/// Returns `(u, gain_matrix)` for the unconstrained minimizer.
#[pyfunction]
#[pyo3(signature = (s_prev, s_star, r_prev, u_prev, j_k, j_prev, weights_raw = None))]
fn solve_command(
    s_prev: Vec<f64>,
    s_star: Vec<f64>,
    r_prev: Vec<f64>,
    u_prev: Vec<f64>,
    j_k: Vec<Vec<f64>>,
    j_prev: Vec<Vec<f64>>,
    weights_raw: Option<[f64; 7]>,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let ctx = context(s_prev, s_star, r_prev, u_prev, j_k, j_prev)?;
    let sol = mfac::solve_command(&ctx, &weights(weights_raw)?).map_err(err)?;
    Ok((sol.u.iter().copied().collect(), rows(&sol.gain_matrix)))
}

#[pyfunction]
#[pyo3(signature = (u, s_prev, s_star, r_prev, u_prev, j_k, j_prev, weights_raw = None))]
#[allow(clippy::too_many_arguments)]
fn objective(
    u: Vec<f64>,
    s_prev: Vec<f64>,
    s_star: Vec<f64>,
    r_prev: Vec<f64>,
    u_prev: Vec<f64>,
    j_k: Vec<Vec<f64>>,
    j_prev: Vec<Vec<f64>>,
    weights_raw: Option<[f64; 7]>,
) -> PyResult<f64> {
    let ctx = context(s_prev, s_star, r_prev, u_prev, j_k, j_prev)?;
    Ok(mfac::objective(&vector3(&u, "u")?, &ctx, &weights(weights_raw)?))
}

#[pyfunction]
#[pyo3(signature = (u, s_prev, s_star, r_prev, u_prev, j_k, j_prev, weights_raw = None))]
#[allow(clippy::too_many_arguments)]
fn gradient(
    u: Vec<f64>,
    s_prev: Vec<f64>,
    s_star: Vec<f64>,
    r_prev: Vec<f64>,
    u_prev: Vec<f64>,
    j_k: Vec<Vec<f64>>,
    j_prev: Vec<Vec<f64>>,
    weights_raw: Option<[f64; 7]>,
) -> PyResult<Vec<f64>> {
    let ctx = context(s_prev, s_star, r_prev, u_prev, j_k, j_prev)?;
    Ok(mfac::gradient(&vector3(&u, "u")?, &ctx, &weights(weights_raw)?).iter().copied().collect())
}

#[pyfunction]
fn saturate(u: Vec<f64>, limit: Vec<f64>) -> PyResult<Vec<f64>> {
    let limit = vector3(&limit, "limit")?;
    if limit.iter().any(|l| !(*l > 0.0)) {
        return Err(PyValueError::new_err("limit must be positive"));
    }
    Ok(mfac::saturate(&vector3(&u, "u")?, &limit).iter().copied().collect())
}

#[pyfunction]
fn metric_t1(s: Vec<f64>, s_star: Vec<f64>) -> PyResult<f64> {
    servo::metric_t1(&DVector::from_vec(s), &DVector::from_vec(s_star)).map_err(err)
}

/// Result of one servo run.
#[pyclass(name = "RunResult", skip_from_py_object)]
struct PyRunResult {
    outcome: RunOutcome,
}

fn summary_dict<'py>(py: Python<'py>, s: &RunSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("steps_taken", s.steps_taken)?;
    d.set_item("initial_t1", s.initial_t1)?;
    d.set_item("final_t1", s.final_t1)?;
    d.set_item("converged", s.converged)?;
    d.set_item("wall_time", s.wall_time)?;
    Ok(d)
}

fn record_dict<'py>(py: Python<'py>, r: &StepRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("k", r.k)?;
    d.set_item("pose", pose_tuple(&r.pose))?;
    d.set_item("u", r.u.iter().copied().collect::<Vec<_>>())?;
    d.set_item("s", r.s.as_slice().to_vec())?;
    d.set_item("t1", r.t1)?;
    d.set_item("alpha", r.alpha)?;
    d.set_item("delta_eps", r.delta_eps)?;
    d.set_item("trace_p", r.trace_p)?;
    d.set_item("q_value", r.q_value)?;
    d.set_item("clamped", r.clamped)?;
    d.set_item("skipped", r.skipped)?;
    Ok(d)
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        summary_dict(py, &self.outcome.summary)
    }

    #[getter]
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.outcome.records.iter().map(|r| record_dict(py, r)).collect()
    }

    #[getter]
    fn t1(&self) -> Vec<f64> {
        self.outcome.records.iter().map(|r| r.t1).collect()
    }

    #[getter]
    fn jacobians(&self) -> Vec<Vec<Vec<f64>>> {
        self.outcome.jacobians.iter().map(rows).collect()
    }

    #[getter]
    fn target_feature(&self) -> Vec<f64> {
        self.outcome.target_feature.as_slice().to_vec()
    }

    /// Relative Frobenius error of each estimate against the oracle, keyed by step.
    fn oracle_errors(&self, model: &PyFeatureModel) -> PyResult<Vec<(usize, f64)>> {
        let rows = servo::oracle_errors(&self.outcome, &model.inner).map_err(err)?;
        Ok(rows.iter().map(|r| (r.k, r.relative)).collect())
    }

    fn write(&self, log_path: &str, dump_shapes: bool) -> PyResult<()> {
        servo::write_outputs(&self.outcome, log_path.as_ref(), dump_shapes).map_err(err)
    }
}

/// Runs the loop in memory.
#[pyfunction]
fn simulate(py: Python<'_>, config: &PyRunConfig, model: &PyFeatureModel) -> PyResult<PyRunResult> {
    let (c, m) = (&config.inner, &model.inner);
    let outcome = py.detach(|| servo::simulate(c, m)).map_err(err)?;
    Ok(PyRunResult { outcome })
}

/// Loads the configured feature model, runs, and writes the log files.
#[pyfunction]
#[pyo3(signature = (config, dump_shapes = false))]
fn run_servo(py: Python<'_>, config: &PyRunConfig, dump_shapes: bool) -> PyResult<PyRunResult> {
    let c = &config.inner;
    let outcome = py.detach(|| servo::run_servo(c, dump_shapes)).map_err(err)?;
    Ok(PyRunResult { outcome })
}

#[pymodule]
#[pyo3(name = "rodservo")]
fn rodservo_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyFeatureModel>()?;
    m.add_class::<PyFilter>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(render_centerline, m)?)?;
    m.add_function(wrap_pyfunction!(apply_command, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive_factor, m)?)?;
    m.add_function(wrap_pyfunction!(compute_adaptive_factor, m)?)?;
    m.add_function(wrap_pyfunction!(correction_factor, m)?)?;
    m.add_function(wrap_pyfunction!(build_observation_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(solve_command, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(saturate, m)?)?;
    m.add_function(wrap_pyfunction!(metric_t1, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_servo, m)?)?;
    Ok(())
}
