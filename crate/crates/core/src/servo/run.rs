//! The closed servo loop.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};

use super::config::{RunConfig, TargetSpec};
use super::log::{self, RunSummary, ShapeRow, StepRecord};
use crate::akf::{self, Measurement};
use crate::error::{Error, Result};
use crate::feature::{extract_feature, load_model, CleanFeatures, FeatureModel};
use crate::mfac::{objective, saturate, solve_command, ControllerContext};
use crate::world::{
    oracle_jacobian, render_centerline, Centerline, RodWorld, WorldConfig, DEFAULT_ORACLE_STEP,
};

/// Deformation error `|s* - s|`.
pub fn metric_t1(s: &DVector<f64>, s_star: &DVector<f64>) -> Result<f64> {
    if s.len() != s_star.len() {
        return Err(Error::DimensionMismatch {
            expected: s_star.len(),
            got: s.len(),
        });
    }
    Ok((s_star - s).norm())
}

/// Everything one run produced, beyond what goes into the log files.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    /// Row 0 is the initial observation.
    pub records: Vec<StepRecord>,
    /// Observed centerlines, indexed like `records`.
    pub centerlines: Vec<Centerline>,
    pub target_feature: DVector<f64>,
    pub target_centerline: Centerline,
    /// Estimate after each update, indexed like `records`; entry 0 is the probed initial estimate.
    pub jacobians: Vec<DMatrix<f64>>,
}

impl RunOutcome {
    pub fn shape_rows(&self) -> Vec<ShapeRow> {
        let target = ShapeRow {
            label: "target".into(),
            k: 0,
            centerline: self.target_centerline.clone(),
        };
        let steps = self.records.iter().zip(&self.centerlines).map(|(r, c)| ShapeRow {
            label: "step".into(),
            k: r.k,
            centerline: c.clone(),
        });
        std::iter::once(target).chain(steps).collect()
    }
}

/// World configuration actually used by a run: the run seed drives the noise.
pub fn run_world_config(config: &RunConfig) -> WorldConfig {
    WorldConfig {
        seed: config.run.seed,
        ..config.world.clone()
    }
}

fn target(config: &RunConfig, model: &FeatureModel) -> Result<(DVector<f64>, Centerline)> {
    match config.target_spec()? {
        TargetSpec::Pose(pose) => {
            let c = render_centerline(&pose, &config.world)?;
            Ok((extract_feature(&c, model)?, c))
        }
        TargetSpec::Feature(s) => {
            let c = Centerline::from_vector(&model.reconstruct(&s)?)?;
            Ok((s, c))
        }
    }
}

/// Runs the loop in memory without touching the filesystem.
pub fn simulate(config: &RunConfig, model: &FeatureModel) -> Result<RunOutcome> {
    config.validate()?;
    if model.n_points() != config.world.n_points {
        return Err(Error::DimensionInconsistency(format!(
            "feature model has {} points, world renders {}",
            model.n_points(),
            config.world.n_points
        )));
    }
    let started = Instant::now();
    let (s_star, target_centerline) = target(config, model)?;
    let mut world = RodWorld::new(run_world_config(config))?;
    let weights = &config.control.weights;
    let limit = config.control.limit();

    let mut pose = config.start_pose();
    let mut state = {
        let mut obs = crate::feature::RodFeatures {
            world: &mut world,
            model,
        };
        akf::initialize(&mut obs, &pose, &config.world.workspace, &config.akf)?
    };
    let c0 = world.observe(&pose)?;
    let mut s = extract_feature(&c0, model)?;
    let initial_t1 = metric_t1(&s, &s_star)?;

    let mut records = vec![StepRecord {
        k: 0,
        pose,
        u: Vector3::zeros(),
        s: s.clone(),
        t1: initial_t1,
        alpha: 1.0,
        delta_eps: 0.0,
        trace_p: state.p.trace(),
        q_value: 0.0,
        clamped: false,
        skipped: false,
    }];
    let mut centerlines = vec![c0];
    let mut jacobians = vec![akf::current_jacobian(&state)];
    let mut u_prev = Vector3::zeros();
    let mut j_prev = jacobians[0].clone();

    for k in 1..=config.run.max_steps {
        let at = |e: Error| Error::AtStep { step: k, source: Box::new(e) };
        let j_k = akf::current_jacobian(&state);
        let ctx = ControllerContext {
            s_prev: s.clone(),
            s_star: s_star.clone(),
            r_prev: pose.as_vector(),
            u_prev,
            j_k: j_k.clone(),
            j_prev,
        };
        let solution = solve_command(&ctx, weights).map_err(at)?;
        let u = saturate(&solution.u, &limit);
        let q_value = objective(&u, &ctx, weights);
        let outcome = world.apply(&pose, &u).map_err(at)?;
        let centerline = world.observe(&outcome.pose).map_err(at)?;
        let s_next = extract_feature(&centerline, model).map_err(at)?;
        let m = Measurement {
            du: DVector::from_column_slice(outcome.applied.as_slice()),
            ds: &s_next - &s,
        };
        let (next, diag) = akf::update(&state, &m, &config.akf).map_err(at)?;
        let t1 = metric_t1(&s_next, &s_star)?;

        records.push(StepRecord {
            k,
            pose: outcome.pose,
            u,
            s: s_next.clone(),
            t1,
            alpha: diag.alpha,
            delta_eps: diag.delta_eps,
            trace_p: diag.trace_p,
            q_value,
            clamped: outcome.clamped || u != solution.u,
            skipped: diag.skipped,
        });
        centerlines.push(centerline);
        jacobians.push(akf::current_jacobian(&next));

        state = next;
        pose = outcome.pose;
        s = s_next;
        u_prev = outcome.applied;
        j_prev = j_k;
        if t1 < config.run.stop_tol {
            break;
        }
    }

    let last = records.last().expect("at least one step runs");
    let summary = RunSummary {
        steps_taken: last.k,
        initial_t1,
        final_t1: last.t1,
        converged: last.t1 < config.run.stop_tol,
        wall_time: started.elapsed().as_secs_f64(),
        config: config.clone(),
    };
    Ok(RunOutcome {
        summary,
        records,
        centerlines,
        target_feature: s_star,
        target_centerline,
        jacobians,
    })
}

/// Loads the feature model, runs the loop and writes the step log and summary.
pub fn run_servo(config: &RunConfig, dump_shapes: bool) -> Result<RunOutcome> {
    let model = load_model(&config.run.feature_model_path)?;
    let outcome = simulate(config, &model)?;
    write_outputs(&outcome, &config.run.log_path, dump_shapes)?;
    Ok(outcome)
}

pub fn write_outputs(outcome: &RunOutcome, log_path: &Path, dump_shapes: bool) -> Result<()> {
    if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    log::write_step_log(&outcome.records, log_path)?;
    log::write_summary(&outcome.summary, log::summary_path(log_path))?;
    if dump_shapes {
        log::write_shapes(&outcome.shape_rows(), log::shapes_path(log_path))?;
    }
    Ok(())
}

/// Estimate-versus-oracle error at one logged step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub k: usize,
    pub frobenius: f64,
    pub relative: f64,
}

/// Compares each post-update estimate with the central-difference Jacobian
/// of the noise-free feature map at the pose it was estimated at. Steps whose
/// stencil would leave the workspace are left out.
pub fn oracle_errors(outcome: &RunOutcome, model: &FeatureModel) -> Result<Vec<OracleRow>> {
    let world = &outcome.summary.config.world;
    let mut clean = CleanFeatures { world, model };
    let mut rows = Vec::new();
    for (r, j_hat) in outcome.records.iter().zip(&outcome.jacobians).skip(1) {
        let oracle = match oracle_jacobian(&r.pose, &mut clean, &world.workspace, DEFAULT_ORACLE_STEP) {
            Ok(j) => j,
            Err(Error::Stencil { .. }) => continue,
            Err(e) => return Err(e),
        };
        let frobenius = (j_hat - &oracle).norm();
        rows.push(OracleRow {
            k: r.k,
            frobenius,
            relative: frobenius / oracle.norm(),
        });
    }
    Ok(rows)
}

/// Median relative error over the last `window` rows (fewer if the run was shorter).
pub fn tail_median(rows: &[OracleRow], window: usize) -> Option<f64> {
    let start = rows.len().saturating_sub(window);
    let mut tail: Vec<f64> = rows[start..].iter().map(|r| r.relative).collect();
    if tail.is_empty() {
        return None;
    }
    tail.sort_by(f64::total_cmp);
    let n = tail.len();
    Some(if n % 2 == 1 {
        tail[n / 2]
    } else {
        0.5 * (tail[n / 2 - 1] + tail[n / 2])
    })
}
