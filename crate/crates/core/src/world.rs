//! Synthetic planar elastic rod.
//!
//! The rod is clamped at a fixed base (position and tangent direction) and held
//! by the gripper at its free end. Its centerline is a cubic Hermite segment
//! between the two, resampled at `n_points` arc-length-uniform stations and
//! mapped affinely into pixel coordinates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curve::Hermite;
use crate::error::{Error, Result};

/// Per-step pose increment `(dx, dy, dtheta)`.
pub type VelocityCommand = Vector3<f64>;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Planar gripper pose. `theta` is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectorPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl EffectorPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    /// Componentwise offset, with the angle renormalized.
    pub fn offset(&self, d: &Vector3<f64>) -> Self {
        Self::new(self.x + d.x, self.y + d.y, self.theta + d.z)
    }

    /// Pose difference `self - earlier` with the angular part wrapped.
    pub fn delta_from(&self, earlier: &EffectorPose) -> Vector3<f64> {
        Vector3::new(
            self.x - earlier.x,
            self.y - earlier.y,
            normalize_angle(self.theta - earlier.theta),
        )
    }
}

/// Axis-aligned bounds on the gripper position. The angle is unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            x_min: 0.20,
            x_max: 0.60,
            y_min: -0.20,
            y_max: 0.20,
        }
    }
}

impl Workspace {
    pub fn contains(&self, pose: &EffectorPose) -> bool {
        self.contains_with_margin(pose, 0.0)
    }

    pub fn contains_with_margin(&self, pose: &EffectorPose, margin: f64) -> bool {
        pose.x >= self.x_min + margin
            && pose.x <= self.x_max - margin
            && pose.y >= self.y_min + margin
            && pose.y <= self.y_max - margin
    }

    /// Clamps the position into bounds; the flag reports whether anything moved.
    pub fn clamp(&self, pose: &EffectorPose) -> (EffectorPose, bool) {
        let x = pose.x.clamp(self.x_min, self.x_max);
        let y = pose.y.clamp(self.y_min, self.y_max);
        let clamped = x != pose.x || y != pose.y;
        (EffectorPose { x, y, theta: pose.theta }, clamped)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_points: usize,
    /// Clamped end of the rod, meters.
    pub base_point: [f64; 2],
    /// Direction of the rod leaving the base, radians.
    pub base_tangent: f64,
    /// Magnitude of both Hermite end tangents, meters.
    pub tangent_scale: f64,
    pub pixel_scale: f64,
    pub pixel_offset: [f64; 2],
    pub obs_noise_sigma: f64,
    pub workspace: Workspace,
    /// Start of the dataset random walk.
    pub home_pose: [f64; 3],
    /// Per-component bound of the dataset random-walk increments.
    pub walk_step: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_points: 100,
            base_point: [0.0, 0.0],
            base_tangent: 0.0,
            tangent_scale: 0.4,
            pixel_scale: 500.0,
            pixel_offset: [40.0, 160.0],
            obs_noise_sigma: 0.0,
            workspace: Workspace::default(),
            home_pose: [0.45, 0.0, 0.0],
            walk_step: 0.01,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("world: {msg}")));
        let ws = &self.workspace;
        if self.n_points < 2 {
            return bad("n_points must be at least 2");
        }
        if !(self.pixel_scale > 0.0) {
            return bad("pixel_scale must be positive");
        }
        if !(self.obs_noise_sigma >= 0.0) {
            return bad("obs_noise_sigma must be non-negative");
        }
        if !(ws.x_min < ws.x_max) || !(ws.y_min < ws.y_max) {
            return bad("workspace bounds must satisfy min < max");
        }
        if !(self.tangent_scale > 0.0) {
            return bad("tangent_scale must be positive");
        }
        if !(self.walk_step >= 0.0) {
            return bad("walk_step must be non-negative");
        }
        if !ws.contains(&self.home()) {
            return bad("home_pose must lie inside the workspace");
        }
        Ok(())
    }

    pub fn home(&self) -> EffectorPose {
        EffectorPose::new(self.home_pose[0], self.home_pose[1], self.home_pose[2])
    }

    /// The pose at which the rod leaves the base; rendering it collapses the curve.
    pub fn base_pose(&self) -> EffectorPose {
        EffectorPose::new(self.base_point[0], self.base_point[1], self.base_tangent)
    }
}

/// Ordered pixel points along the rod.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    points: Vec<Vector2<f64>>,
}

impl Centerline {
    pub fn new(points: Vec<Vector2<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: points.len(),
            });
        }
        Ok(Self { points })
    }

    /// Rebuilds a centerline from its interleaved `[u1, v1, u2, v2, ...]` form.
    pub fn from_vector(v: &DVector<f64>) -> Result<Self> {
        if !v.len().is_multiple_of(2) {
            return Err(Error::DimensionInconsistency(format!(
                "centerline vector has odd length {}",
                v.len()
            )));
        }
        Self::new(v.as_slice().chunks(2).map(|c| Vector2::new(c[0], c[1])).collect())
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Interleaved `[u1, v1, u2, v2, ...]`.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.points.len(), self.points.iter().flat_map(|p| [p.x, p.y]))
    }

    pub fn has_distinct_consecutive_points(&self) -> bool {
        self.points.windows(2).all(|w| w[0] != w[1])
    }
}

/// Noise-free centerline for `pose`.
pub fn render_centerline(pose: &EffectorPose, config: &WorldConfig) -> Result<Centerline> {
    if !config.workspace.contains(pose) {
        return Err(Error::WorkspaceViolation { x: pose.x, y: pose.y });
    }
    Centerline::new(render_unchecked(pose, config))
}

fn render_unchecked(pose: &EffectorPose, config: &WorldConfig) -> Vec<Vector2<f64>> {
    let t = config.tangent_scale;
    let base = Vector2::new(config.base_point[0], config.base_point[1]);
    let base_dir = Vector2::new(config.base_tangent.cos(), config.base_tangent.sin());
    let tip = Vector2::new(pose.x, pose.y);
    let tip_dir = Vector2::new(pose.theta.cos(), pose.theta.sin());
    let curve = Hermite::new(base, base_dir * t, tip, tip_dir * t);
    let offset = Vector2::new(config.pixel_offset[0], config.pixel_offset[1]);
    curve
        .sample_arc_length(config.n_points)
        .into_iter()
        .map(|p| offset + p * config.pixel_scale)
        .collect()
}

/// Result of integrating one command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandOutcome {
    pub pose: EffectorPose,
    /// Command that actually took effect after clamping.
    pub applied: VelocityCommand,
    pub clamped: bool,
}

/// Integrates `du` exactly, renormalizes the angle, and clamps to the workspace.
pub fn apply_command(pose: &EffectorPose, du: &VelocityCommand, config: &WorldConfig) -> Result<CommandOutcome> {
    if du.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidCommand(format!("non-finite component in {:?}", du.as_slice())));
    }
    let (next, clamped) = config.workspace.clamp(&pose.offset(du));
    let applied = Vector3::new(next.x - pose.x, next.y - pose.y, du.z);
    Ok(CommandOutcome {
        pose: next,
        applied,
        clamped,
    })
}

/// A pose-to-feature map that can be sampled by the estimator and the oracle.
pub trait FeatureObserver {
    fn observe(&mut self, pose: &EffectorPose) -> Result<DVector<f64>>;

    /// Whether observations carry random noise.
    fn is_noisy(&self) -> bool {
        false
    }
}

impl<F> FeatureObserver for F
where
    F: FnMut(&EffectorPose) -> DVector<f64>,
{
    fn observe(&mut self, pose: &EffectorPose) -> Result<DVector<f64>> {
        Ok(self(pose))
    }
}

pub const DEFAULT_ORACLE_STEP: f64 = 1e-6;

/// Central-difference Jacobian of the observed feature with respect to the pose.
pub fn oracle_jacobian<O: FeatureObserver + ?Sized>(
    pose: &EffectorPose,
    observer: &mut O,
    workspace: &Workspace,
    h: f64,
) -> Result<DMatrix<f64>> {
    if observer.is_noisy() {
        return Err(Error::Precondition("oracle Jacobian requires a noise-free observer".into()));
    }
    if !(h > 0.0) {
        return Err(Error::Precondition(format!("stencil step must be positive, got {h}")));
    }
    if !workspace.contains_with_margin(pose, h) {
        return Err(Error::Stencil { h });
    }
    let mut columns = Vec::with_capacity(3);
    for j in 0..3 {
        let mut step = Vector3::zeros();
        step[j] = h;
        let plus = observer.observe(&pose.offset(&step))?;
        let minus = observer.observe(&pose.offset(&-step))?;
        columns.push((plus - minus) / (2.0 * h));
    }
    Ok(DMatrix::from_columns(&columns))
}

/// A rod instance with its own seeded observation-noise generator.
#[derive(Debug, Clone)]
pub struct RodWorld {
    config: WorldConfig,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl RodWorld {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let noise = if config.obs_noise_sigma > 0.0 {
            Some(Normal::new(0.0, config.obs_noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?)
        } else {
            None
        };
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { config, rng, noise })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn is_noisy(&self) -> bool {
        self.noise.is_some()
    }

    /// Camera observation: the rendered centerline plus optional pixel noise.
    pub fn observe(&mut self, pose: &EffectorPose) -> Result<Centerline> {
        let clean = render_centerline(pose, &self.config)?;
        match self.noise {
            None => Ok(clean),
            Some(dist) => {
                let rng = &mut self.rng;
                let points = clean
                    .points
                    .iter()
                    .map(|p| Vector2::new(p.x + dist.sample(rng), p.y + dist.sample(rng)))
                    .collect();
                Centerline::new(points)
            }
        }
    }

    pub fn apply(&self, pose: &EffectorPose, du: &VelocityCommand) -> Result<CommandOutcome> {
        apply_command(pose, du, &self.config)
    }
}
