//! Online estimation of the deformation Jacobian with an adaptive Kalman filter.
//!
//! The filter state is the row-major vectorization of the `p x q` Jacobian.
//! Each measurement pairs a pose increment `du` with the observed feature
//! increment `ds`, which is linear in the state through the block-diagonal
//! observation matrix built by [`build_observation_matrix`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{EffectorPose, FeatureObserver, Workspace};

/// Floor on the trace of the predicted-residual covariance.
const TRACE_FLOOR: f64 = 1e-12;

/// How the measurement-noise covariance is re-estimated after each update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseUpdate {
    /// `R = (1 - d) R + d eps eps^T`; stays positive semi-definite.
    Residual,
    /// `R = (1 - d) R + d (eps eps^T - M P M^T)`; unbiased but may lose definiteness.
    Unbiased,
}

/// Normalizer of the residual statistic `delta_eps = sqrt(eps^T eps / trace(G))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualStatistic {
    /// `G = M P M^T + R`, the full predicted-residual covariance.
    Innovation,
    /// `G = M P M^T`; ignores measurement noise, so the statistic grows
    /// without bound as `P` contracts on a noisy plant.
    Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AkfConfig {
    pub c0: f64,
    pub c1: f64,
    /// Forgetting factor of the noise-covariance recursions.
    pub b: f64,
    pub alpha_min: f64,
    pub p0_scale: f64,
    pub r0_scale: f64,
    pub q0_scale: f64,
    /// Ceiling on `trace(P)`; the posterior is rescaled when it exceeds it.
    pub p_max_trace: f64,
    /// Updates with `|du| < du_min` are skipped.
    pub du_min: f64,
    pub probe_delta: f64,
    pub noise_update: NoiseUpdate,
    pub residual_statistic: ResidualStatistic,
}

impl Default for AkfConfig {
    fn default() -> Self {
        Self {
            c0: 1.2,
            c1: 5.0,
            b: 0.95,
            alpha_min: 1e-3,
            p0_scale: 1.0,
            r0_scale: 1e-2,
            q0_scale: 1e-4,
            p_max_trace: 1e3,
            du_min: 1e-8,
            probe_delta: 5e-3,
            noise_update: NoiseUpdate::Residual,
            residual_statistic: ResidualStatistic::Innovation,
        }
    }
}

impl AkfConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("akf: {msg}")));
        if !(self.c0 > 0.0 && self.c0 < self.c1) {
            return bad(format!("need 0 < c0 < c1, got c0 = {}, c1 = {}", self.c0, self.c1));
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return bad(format!("forgetting factor b = {} must lie in (0, 1)", self.b));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= 1.0) {
            return bad(format!("alpha_min = {} must lie in (0, 1]", self.alpha_min));
        }
        for (name, v) in [
            ("p0_scale", self.p0_scale),
            ("r0_scale", self.r0_scale),
            ("q0_scale", self.q0_scale),
            ("p_max_trace", self.p_max_trace),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.du_min >= 0.0) {
            return bad("du_min must be non-negative".into());
        }
        if !(self.probe_delta > 0.0) {
            return bad("probe_delta must be positive".into());
        }
        Ok(())
    }
}

/// One filter input: pose increment and the feature increment it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub du: DVector<f64>,
    pub ds: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// Row-major vectorized Jacobian estimate.
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub r_hat: DMatrix<f64>,
    pub q_hat: DMatrix<f64>,
    /// Number of completed (non-skipped) updates.
    pub k: u64,
    feature_dim: usize,
    pose_dim: usize,
}

impl FilterState {
    /// State with the given Jacobian estimate and scaled-identity covariances.
    pub fn from_jacobian(jacobian: &DMatrix<f64>, config: &AkfConfig) -> Self {
        let (p, q) = jacobian.shape();
        let n = p * q;
        Self {
            x_hat: vectorize(jacobian),
            p: DMatrix::identity(n, n) * config.p0_scale,
            r_hat: DMatrix::identity(p, p) * config.r0_scale,
            q_hat: DMatrix::identity(n, n) * config.q0_scale,
            k: 0,
            feature_dim: p,
            pose_dim: q,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn pose_dim(&self) -> usize {
        self.pose_dim
    }
}

/// Per-update quantities exposed to the run log.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDiagnostics {
    /// Index `k` of this update (the value used in `d_k`).
    pub step: u64,
    pub residual: DVector<f64>,
    pub delta_eps: f64,
    /// Adaptive factor before clamping.
    pub alpha_raw: f64,
    /// Adaptive factor used in the gain.
    pub alpha: f64,
    pub d: f64,
    pub trace_p: f64,
    pub skipped: bool,
}

/// Row-major vectorization of a `p x q` matrix.
pub fn vectorize(jacobian: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(jacobian.transpose().as_slice())
}

/// Reshapes the state back into the `p x q` Jacobian estimate.
pub fn current_jacobian(state: &FilterState) -> DMatrix<f64> {
    DMatrix::from_row_slice(state.feature_dim, state.pose_dim, state.x_hat.as_slice())
}

/// Block-diagonal `p x pq` matrix holding `p` copies of `du^T`.
pub fn build_observation_matrix(du: &DVector<f64>, p: usize) -> DMatrix<f64> {
    let q = du.len();
    let mut m = DMatrix::zeros(p, p * q);
    for i in 0..p {
        m.view_mut((i, i * q), (1, q)).copy_from(&du.transpose());
    }
    m
}

/// Jacobian estimate from `q` forward probing moves of size `probe_delta`.
pub fn initialize<O: FeatureObserver + ?Sized>(
    observer: &mut O,
    pose: &EffectorPose,
    workspace: &Workspace,
    config: &AkfConfig,
) -> Result<FilterState> {
    if !(config.probe_delta > 0.0) {
        return Err(Error::Precondition(format!(
            "probe_delta must be positive, got {}",
            config.probe_delta
        )));
    }
    if !workspace.contains_with_margin(pose, config.probe_delta) {
        return Err(Error::Precondition(format!(
            "probing by {} from ({}, {}) would leave the workspace",
            config.probe_delta, pose.x, pose.y
        )));
    }
    let s0 = observer.observe(pose)?;
    let mut columns = Vec::with_capacity(3);
    for j in 0..3 {
        let mut step = nalgebra::Vector3::zeros();
        step[j] = config.probe_delta;
        let probed = observer.observe(&pose.offset(&step))?;
        columns.push((probed - &s0) / config.probe_delta);
    }
    Ok(FilterState::from_jacobian(&DMatrix::from_columns(&columns), config))
}

/// Identity transition: the estimate is carried over and `Q` is added to `P`.
pub fn predict(state: &FilterState) -> FilterState {
    let mut next = state.clone();
    next.p += &state.q_hat;
    next
}

/// Raw adaptive factor as a function of the residual statistic.
pub fn adaptive_factor(delta_eps: f64, config: &AkfConfig) -> f64 {
    let (c0, c1) = (config.c0, config.c1);
    let e = delta_eps.abs();
    if e <= c0 {
        1.0
    } else if e <= c1 {
        (c0 / e) * ((c0 - e) / (c1 - c0)).powi(2)
    } else {
        0.0
    }
}

/// Adaptive factor clamped into `[alpha_min, 1]`, the form used by the gain.
pub fn compute_adaptive_factor(delta_eps: f64, config: &AkfConfig) -> f64 {
    adaptive_factor(delta_eps, config).clamp(config.alpha_min, 1.0)
}

/// Bias-correcting weight `d_k = (1 - b) / (1 - b^(k+1))`.
pub fn correction_factor(k: u64, b: f64) -> f64 {
    let exp = i32::try_from(k.saturating_add(1)).unwrap_or(i32::MAX);
    (1.0 - b) / (1.0 - b.powi(exp))
}

pub fn update(state: &FilterState, m: &Measurement, config: &AkfConfig) -> Result<(FilterState, UpdateDiagnostics)> {
    let (p, q) = (state.feature_dim, state.pose_dim);
    if m.du.len() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            got: m.du.len(),
        });
    }
    if m.ds.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: m.ds.len(),
        });
    }
    if m.du.iter().chain(m.ds.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidCommand("measurement has non-finite entries".into()));
    }

    if m.du.norm() < config.du_min {
        let diag = UpdateDiagnostics {
            step: state.k,
            residual: DVector::zeros(p),
            delta_eps: 0.0,
            alpha_raw: 1.0,
            alpha: 1.0,
            d: correction_factor(state.k, config.b),
            trace_p: state.p.trace(),
            skipped: true,
        };
        return Ok((state.clone(), diag));
    }

    let prior = predict(state);
    let obs = build_observation_matrix(&m.du, p);
    let residual = &m.ds - &obs * &prior.x_hat;
    let obs_p = &obs * &prior.p;
    let residual_cov = &obs_p * obs.transpose();
    let trace = match config.residual_statistic {
        ResidualStatistic::Innovation => residual_cov.trace() + state.r_hat.trace(),
        ResidualStatistic::Prior => residual_cov.trace(),
    }
    .max(TRACE_FLOOR);
    let delta_eps = (residual.norm_squared() / trace).sqrt();
    let alpha_raw = adaptive_factor(delta_eps, config);
    let alpha = alpha_raw.clamp(config.alpha_min, 1.0);
    let d = correction_factor(state.k, config.b);

    let mut diagnostics = UpdateDiagnostics {
        step: state.k,
        residual: residual.clone(),
        delta_eps,
        alpha_raw,
        alpha,
        d,
        trace_p: prior.p.trace(),
        skipped: false,
    };

    let outer = &residual * residual.transpose();
    let mut r_hat = match config.noise_update {
        NoiseUpdate::Residual => &state.r_hat * (1.0 - d) + &outer * d,
        NoiseUpdate::Unbiased => &state.r_hat * (1.0 - d) + (&outer - &residual_cov) * d,
    };
    condition_covariance(&mut r_hat);

    // K = (1/a) P M^T ((1/a) M P M^T + R)^-1, solved against the symmetric
    // innovation matrix rather than inverted.
    let innovation = &residual_cov / alpha + &r_hat;
    let rhs = &obs_p / alpha;
    let solved = match innovation.clone().cholesky() {
        Some(chol) => Some(chol.solve(&rhs)),
        None => innovation.clone().lu().solve(&rhs),
    };
    let gain = match solved {
        Some(x) if x.iter().all(|v| v.is_finite()) => x.transpose(),
        _ => {
            return Err(Error::NumericalFailure {
                diagnostics: Box::new(diagnostics),
            })
        }
    };

    let n = p * q;
    let x_hat = &prior.x_hat + &gain * &residual;
    let mut p_post = (DMatrix::identity(n, n) - &gain * &obs) * &prior.p / alpha;
    condition_covariance(&mut p_post);
    // Without excitation the 1/alpha inflation compounds in unobserved
    // directions; the ceiling stops that windup.
    let trace_post = p_post.trace();
    if trace_post > config.p_max_trace {
        p_post *= config.p_max_trace / trace_post;
    }

    let k_eps = &gain * &residual;
    let mut q_hat = &state.q_hat * (1.0 - d) + (&k_eps * k_eps.transpose() + &p_post - &prior.p) * d;
    condition_covariance(&mut q_hat);

    diagnostics.trace_p = p_post.trace();
    let next = FilterState {
        x_hat,
        p: p_post,
        r_hat,
        q_hat,
        k: state.k + 1,
        feature_dim: p,
        pose_dim: q,
    };
    Ok((next, diagnostics))
}

/// Symmetrizes in place and floors negative eigenvalues at zero.
fn condition_covariance(m: &mut DMatrix<f64>) {
    let sym = (&*m + m.transpose()) * 0.5;
    *m = sym;
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.min() < 0.0 {
        let floored = eig.eigenvalues.map(|l| l.max(0.0));
        let v = &eig.eigenvectors;
        let mut rebuilt = v * DMatrix::from_diagonal(&floored) * v.transpose();
        rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;
        *m = rebuilt;
    }
}
