//! Closed-form model-free adaptive velocity controller.
//!
//! The command minimizes a seven-term quadratic cost built from the one-step
//! feature prediction `s_k = s_{k-1} + J_k u_k`:
//!
//! ```text
//! Q(u) = w1 |e - J u|^2 + w2 |s + J u|^2 + w3 |J u|^2 + w4 |J u - J' u'|^2
//!      + w5 |r + u|^2 + w6 |u|^2 + w7 |u - u'|^2
//! ```
//!
//! where `e = s* - s_{k-1}`, primes denote the previous step, and `r` is the
//! previous pose. The cost is convex, so the stationary point is the minimizer.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::VelocityCommand;

/// The seven cost weights, normalized to sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControllerWeights([f64; 7]);

impl ControllerWeights {
    pub fn new(raw: [f64; 7]) -> Result<Self> {
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "controller weights must be finite and non-negative, got {raw:?}"
            )));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidConfig("controller weights sum to zero".into()));
        }
        // Leave already-normalized tuples untouched so a written config reads back exactly.
        if (total - 1.0).abs() <= 1e-12 {
            return Ok(Self(raw));
        }
        Ok(Self(raw.map(|w| w / total)))
    }

    pub fn as_array(&self) -> [f64; 7] {
        self.0
    }

    /// Weight of term `i` in `1..=7`.
    pub fn w(&self, i: usize) -> f64 {
        self.0[i - 1]
    }

    /// Coefficient of `J^T J` in the normal equations.
    fn feature_sum(&self) -> f64 {
        self.0[..4].iter().sum()
    }

    /// Coefficient of the identity in the normal equations.
    pub fn pose_sum(&self) -> f64 {
        self.0[4..].iter().sum()
    }
}

impl Default for ControllerWeights {
    fn default() -> Self {
        Self([0.60, 0.0, 0.10, 0.10, 0.0, 0.10, 0.10])
    }
}

impl<'de> Deserialize<'de> for ControllerWeights {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = <[f64; 7]>::deserialize(d)?;
        Self::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Everything the controller needs at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerContext {
    pub s_prev: DVector<f64>,
    pub s_star: DVector<f64>,
    pub r_prev: Vector3<f64>,
    pub u_prev: VelocityCommand,
    pub j_k: DMatrix<f64>,
    pub j_prev: DMatrix<f64>,
}

impl ControllerContext {
    pub fn error(&self) -> DVector<f64> {
        &self.s_star - &self.s_prev
    }

    pub fn check(&self) -> Result<()> {
        let p = self.s_prev.len();
        let mismatch = |expected, got| Err(Error::DimensionMismatch { expected, got });
        if self.s_star.len() != p {
            return mismatch(p, self.s_star.len());
        }
        for j in [&self.j_k, &self.j_prev] {
            if j.nrows() != p {
                return mismatch(p, j.nrows());
            }
            if j.ncols() != 3 {
                return mismatch(3, j.ncols());
            }
        }
        Ok(())
    }
}

/// Unconstrained minimizer of the cost and the matrix of its normal equations.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    pub u: VelocityCommand,
    /// `(w1+w2+w3+w4) J^T J + (w5+w6+w7) I`; the controller gain is its inverse.
    pub gain_matrix: DMatrix<f64>,
}

pub fn objective(u: &VelocityCommand, ctx: &ControllerContext, w: &ControllerWeights) -> f64 {
    let ju = &ctx.j_k * u;
    let ju_prev = &ctx.j_prev * ctx.u_prev;
    let e = ctx.error();
    w.w(1) * (e - &ju).norm_squared()
        + w.w(2) * (&ctx.s_prev + &ju).norm_squared()
        + w.w(3) * ju.norm_squared()
        + w.w(4) * (&ju - ju_prev).norm_squared()
        + w.w(5) * (ctx.r_prev + u).norm_squared()
        + w.w(6) * u.norm_squared()
        + w.w(7) * (u - ctx.u_prev).norm_squared()
}

pub fn gradient(u: &VelocityCommand, ctx: &ControllerContext, w: &ControllerWeights) -> Vector3<f64> {
    let jt = ctx.j_k.transpose();
    let jtj = &jt * &ctx.j_k;
    let linear = -(&jt * ctx.error()) * w.w(1) + (&jt * &ctx.s_prev) * w.w(2)
        - (&jt * (&ctx.j_prev * ctx.u_prev)) * w.w(4);
    let linear = Vector3::new(linear[0], linear[1], linear[2]) + ctx.r_prev * w.w(5) - ctx.u_prev * w.w(7);
    let quad = &jtj * u * w.feature_sum();
    let quad = Vector3::new(quad[0], quad[1], quad[2]) + u * w.pose_sum();
    (linear + quad) * 2.0
}

pub fn solve_command(ctx: &ControllerContext, w: &ControllerWeights) -> Result<ControlSolution> {
    ctx.check()?;
    let jt = ctx.j_k.transpose();
    let gain_matrix = (&jt * &ctx.j_k) * w.feature_sum() + DMatrix::identity(3, 3) * w.pose_sum();
    let rhs = (&jt * ctx.error()) * w.w(1) - (&jt * &ctx.s_prev) * w.w(2)
        + (&jt * (&ctx.j_prev * ctx.u_prev)) * w.w(4);
    let rhs = rhs - DVector::from_column_slice((ctx.r_prev * w.w(5) - ctx.u_prev * w.w(7)).as_slice());
    let chol = gain_matrix.clone().cholesky().ok_or(Error::SingularGain)?;
    let u = chol.solve(&rhs);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularGain);
    }
    Ok(ControlSolution {
        u: Vector3::new(u[0], u[1], u[2]),
        gain_matrix,
    })
}

/// Componentwise clamp into `[-limit, limit]`.
pub fn saturate(u: &VelocityCommand, limit: &Vector3<f64>) -> VelocityCommand {
    u.zip_map(limit, |c, l| c.clamp(-l, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_ctx(p: usize) -> ControllerContext {
        ControllerContext {
            s_prev: DVector::zeros(p),
            s_star: DVector::zeros(p),
            r_prev: Vector3::zeros(),
            u_prev: Vector3::zeros(),
            j_k: DMatrix::zeros(p, 3),
            j_prev: DMatrix::zeros(p, 3),
        }
    }

    fn random_ctx(rng: &mut ChaCha8Rng) -> ControllerContext {
        let mut v = |n| DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        ControllerContext {
            s_prev: v(6),
            s_star: v(6),
            r_prev: Vector3::from_column_slice(v(3).as_slice()),
            u_prev: Vector3::from_column_slice(v(3).as_slice()),
            j_k: DMatrix::from_column_slice(6, 3, v(18).as_slice()),
            j_prev: DMatrix::from_column_slice(6, 3, v(18).as_slice()),
        }
    }

    fn only(i: usize) -> ControllerWeights {
        let mut raw = [0.0; 7];
        raw[i - 1] = 1.0;
        ControllerWeights::new(raw).unwrap()
    }

    #[test]
    fn weights_are_normalized() {
        let w = ControllerWeights::new([2.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(w.as_array(), [0.5, 0.0, 0.25, 0.25, 0.0, 0.0, 0.0]);
        assert!(ControllerWeights::new([0.0; 7]).is_err());
        assert!(ControllerWeights::new([1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).is_err());
        let sum: f64 = ControllerWeights::default().as_array().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_context_has_zero_cost() {
        assert_eq!(objective(&Vector3::zeros(), &zero_ctx(6), &ControllerWeights::default()), 0.0);
    }

    #[test]
    fn error_term_alone() {
        let mut ctx = zero_ctx(6);
        ctx.s_star = DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
        let expected = ctx.error().norm_squared();
        assert_eq!(objective(&Vector3::zeros(), &ctx, &only(1)), expected);
    }

    #[test]
    fn command_magnitude_term_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ctx = random_ctx(&mut rng);
        for _ in 0..100 {
            let u = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            assert!((objective(&u, &ctx, &only(6)) - u.norm_squared()).abs() < 1e-14);
            assert!((gradient(&u, &ctx, &only(6)) - u * 2.0).amax() < 1e-14);
        }
    }

    #[test]
    fn zero_rhs_gives_zero_command() {
        let mut ctx = zero_ctx(6);
        ctx.j_k = DMatrix::from_fn(6, 3, |i, j| (i + 2 * j) as f64);
        ctx.j_prev = ctx.j_k.clone();
        let sol = solve_command(&ctx, &ControllerWeights::default()).unwrap();
        assert_eq!(sol.u, Vector3::zeros());
    }

    #[test]
    fn damped_pseudo_inverse_limit() {
        let eps = 1e-9;
        let w = ControllerWeights::new([1.0 - 3.0 * eps, 0.0, 0.0, 0.0, 0.0, 3.0 * eps, 0.0]).unwrap();
        let mut ctx = zero_ctx(6);
        ctx.j_k = DMatrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64).sin() + if i == j { 2.0 } else { 0.0 });
        ctx.j_prev = ctx.j_k.clone();
        ctx.s_star = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let sol = solve_command(&ctx, &w).unwrap();
        let lambda = 3.0 * eps / (1.0 - 3.0 * eps);
        let jt = ctx.j_k.transpose();
        let expected = (&jt * &ctx.j_k + DMatrix::identity(3, 3) * lambda)
            .lu()
            .solve(&(&jt * ctx.error()))
            .unwrap();
        for i in 0..3 {
            assert!((sol.u[i] - expected[i]).abs() < 1e-10 * expected.amax());
        }
    }

    #[test]
    fn solution_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let ctx = random_ctx(&mut rng);
            let w = ControllerWeights::default();
            let sol = solve_command(&ctx, &w).unwrap();
            assert!(gradient(&sol.u, &ctx, &w).norm() < 1e-9);
        }
    }

    #[test]
    fn rank_deficient_without_pose_terms_is_singular() {
        let ctx = zero_ctx(6);
        assert!(matches!(solve_command(&ctx, &only(1)), Err(Error::SingularGain)));
    }

    #[test]
    fn saturation() {
        let lim = Vector3::repeat(1.0);
        let inside = Vector3::new(0.3, -0.9, 1.0);
        assert_eq!(saturate(&inside, &lim), inside);
        assert_eq!(saturate(&Vector3::new(10.0, 0.0, 0.0), &lim), Vector3::new(1.0, 0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let u = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
            let s = saturate(&u, &lim);
            for i in 0..3 {
                assert_eq!(s[i].signum(), u[i].signum());
                assert!(s[i].abs() <= 1.0);
            }
        }
    }

    #[test]
    fn dimension_check() {
        let mut ctx = zero_ctx(6);
        ctx.s_star = DVector::zeros(5);
        assert!(matches!(
            solve_command(&ctx, &ControllerWeights::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
