//! Low-dimensional shape features.
//!
//! A [`FeatureModel`] is a principal-component projection of centerline
//! vectors fitted offline on a random-walk [`ShapeDataset`].

mod io;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::world::{render_centerline, Centerline, EffectorPose, FeatureObserver, RodWorld, WorldConfig};

pub use io::{load_dataset, load_model, save_dataset, save_model, DATASET_FORMAT_VERSION, MODEL_FORMAT_VERSION};

/// Reduced shape representation `s`.
pub type ShapeFeature = DVector<f64>;

pub const DEFAULT_FEATURE_DIM: usize = 6;
pub const DEFAULT_DATASET_SIZE: usize = 5000;

const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDataset {
    pub samples: Vec<(EffectorPose, Centerline)>,
    pub world: WorldConfig,
    pub seed: u64,
}

impl ShapeDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.world.n_points
    }

    fn check_consistent(&self) -> Result<()> {
        let n = self.world.n_points;
        match self.samples.iter().find(|(_, c)| c.len() != n) {
            Some((_, c)) => Err(Error::DimensionMismatch {
                expected: n,
                got: c.len(),
            }),
            None => Ok(()),
        }
    }
}

/// Seeded bounded random walk of the gripper, rendering a clean centerline per step.
pub fn generate_dataset(config: &WorldConfig, n_samples: usize, seed: u64) -> Result<ShapeDataset> {
    config.validate()?;
    if n_samples == 0 {
        return Err(Error::Precondition("n_samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = config.walk_step;
    let mut pose = config.home();
    let mut samples = Vec::with_capacity(n_samples);
    samples.push((pose, render_centerline(&pose, config)?));
    for _ in 1..n_samples {
        let step = if delta > 0.0 {
            Vector3::from_fn(|_, _| rng.random_range(-delta..=delta))
        } else {
            Vector3::zeros()
        };
        pose = config.workspace.clamp(&pose.offset(&step)).0;
        samples.push((pose, render_centerline(&pose, config)?));
    }
    Ok(ShapeDataset {
        samples,
        world: config.clone(),
        seed,
    })
}

/// Linear shape map `s = projection * (c - mean)` with orthonormal projection rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureModel {
    mean: DVector<f64>,
    projection: DMatrix<f64>,
}

impl FeatureModel {
    pub fn new(mean: DVector<f64>, projection: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if !dim.is_multiple_of(2) || dim < 4 {
            return Err(Error::DimensionInconsistency(format!(
                "mean length {dim} is not 2 * n_points with n_points >= 2"
            )));
        }
        if projection.ncols() != dim {
            return Err(Error::DimensionInconsistency(format!(
                "projection has {} columns, mean has {dim} entries",
                projection.ncols()
            )));
        }
        let p = projection.nrows();
        if p == 0 || p > dim {
            return Err(Error::DimensionInconsistency(format!("p = {p} must be in 1..={dim}")));
        }
        let gram = &projection * projection.transpose();
        let dev = (gram - DMatrix::identity(p, p)).amax();
        if !(dev <= ORTHONORMAL_TOL) {
            return Err(Error::DimensionInconsistency(format!(
                "projection rows are not orthonormal (max deviation {dev:.3e})"
            )));
        }
        Ok(Self { mean, projection })
    }

    pub fn p(&self) -> usize {
        self.projection.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    /// Projects a raw interleaved centerline vector.
    pub fn extract_vector(&self, c: &DVector<f64>) -> Result<ShapeFeature> {
        if c.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: c.len(),
            });
        }
        Ok(&self.projection * (c - &self.mean))
    }

    /// Shape on the model's affine range whose feature is `s`.
    pub fn reconstruct(&self, s: &ShapeFeature) -> Result<DVector<f64>> {
        if s.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: s.len(),
            });
        }
        Ok(&self.mean + self.projection.transpose() * s)
    }
}

pub fn extract_feature(c: &Centerline, model: &FeatureModel) -> Result<ShapeFeature> {
    if c.len() != model.n_points() {
        return Err(Error::DimensionMismatch {
            expected: model.n_points(),
            got: c.len(),
        });
    }
    model.extract_vector(&c.to_vector())
}

/// Principal-component fit of the centered dataset.
///
/// Rows are ordered by decreasing explained variance and signed so that the
/// first entry of significant magnitude is positive.
pub fn fit_feature_model(dataset: &ShapeDataset, p: usize) -> Result<FeatureModel> {
    if p == 0 {
        return Err(Error::Precondition("p must be at least 1".into()));
    }
    if dataset.len() < p {
        return Err(Error::Precondition(format!(
            "dataset has {} samples, fewer than p = {p}",
            dataset.len()
        )));
    }
    dataset.check_consistent()?;
    let rows: Vec<DVector<f64>> = dataset.samples.iter().map(|(_, c)| c.to_vector()).collect();
    fit_vectors(&rows, p)
}

pub(crate) fn fit_vectors(rows: &[DVector<f64>], p: usize) -> Result<FeatureModel> {
    let n = rows.len();
    let dim = rows[0].len();
    let mean = rows.iter().fold(DVector::zeros(dim), |acc, r| acc + r) / n as f64;
    let centered = DMatrix::from_fn(n, dim, |i, j| rows[i][j] - mean[j]);

    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));

    // Rank tolerance is relative to the raw data, so rounding left over from
    // mean subtraction does not count as variance.
    let raw_norm = rows.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt();
    let tol = raw_norm * n.max(dim) as f64 * f64::EPSILON;
    let rank = order.iter().filter(|&&i| sv[i] > tol).count();
    if rank < p {
        return Err(Error::RankDeficient {
            requested: p,
            achievable: rank,
        });
    }

    let mut projection = DMatrix::zeros(p, dim);
    for (row, &i) in order.iter().take(p).enumerate() {
        let mut dir = v_t.row(i).into_owned();
        let scale = dir.amax();
        if let Some(lead) = dir.iter().find(|v| v.abs() > 1e-12 * scale) {
            if *lead < 0.0 {
                dir.neg_mut();
            }
        }
        projection.set_row(row, &dir);
    }
    FeatureModel::new(mean, projection)
}

/// Feature observations through a (possibly noisy) rod world.
pub struct RodFeatures<'a> {
    pub world: &'a mut RodWorld,
    pub model: &'a FeatureModel,
}

impl FeatureObserver for RodFeatures<'_> {
    fn observe(&mut self, pose: &EffectorPose) -> Result<DVector<f64>> {
        let c = self.world.observe(pose)?;
        extract_feature(&c, self.model)
    }

    fn is_noisy(&self) -> bool {
        self.world.is_noisy()
    }
}

/// Noise-free feature map `f_s(f_c(r))`.
pub struct CleanFeatures<'a> {
    pub world: &'a WorldConfig,
    pub model: &'a FeatureModel,
}

impl FeatureObserver for CleanFeatures<'_> {
    fn observe(&mut self, pose: &EffectorPose) -> Result<DVector<f64>> {
        extract_feature(&render_centerline(pose, self.world)?, self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_world() -> WorldConfig {
        WorldConfig {
            n_points: 20,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn single_sample_dataset_is_home_pose() {
        let c = small_world();
        let d = generate_dataset(&c, 1, 3).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.samples[0].0, c.home());
        assert_eq!(d.samples[0].1, render_centerline(&c.home(), &c).unwrap());
    }

    #[test]
    fn dataset_is_seeded() {
        let c = small_world();
        assert_eq!(generate_dataset(&c, 50, 9).unwrap(), generate_dataset(&c, 50, 9).unwrap());
        assert_ne!(generate_dataset(&c, 50, 9).unwrap(), generate_dataset(&c, 50, 10).unwrap());
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(generate_dataset(&small_world(), 0, 1).is_err());
    }

    #[test]
    fn identical_centerlines_are_rank_deficient() {
        let c = small_world();
        let line = render_centerline(&c.home(), &c).unwrap();
        let d = ShapeDataset {
            samples: vec![(c.home(), line); 5],
            world: c,
            seed: 0,
        };
        match fit_feature_model(&d, 1) {
            Err(Error::RankDeficient { requested: 1, achievable: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rank_one_data_recovers_direction() {
        // Built analytically: mean + t * d, first entry of d negative.
        let dim = 8;
        let base = DVector::from_fn(dim, |i, _| i as f64 * 0.5);
        let d = DVector::from_vec(vec![-1.0, 2.0, 0.5, 0.0, 3.0, -2.0, 1.0, 0.25]);
        let rows: Vec<_> = (0..10).map(|k| &base + &d * (k as f64 - 4.5)).collect();
        let model = fit_vectors(&rows, 1).unwrap();
        let expected = -&d / d.norm();
        assert!((model.projection().row(0).transpose() - expected).amax() < 1e-12);
        assert!(fit_vectors(&rows, 2).is_err());
    }

    #[test]
    fn mean_shape_maps_to_origin() {
        let c = small_world();
        let d = generate_dataset(&c, 200, 4).unwrap();
        let m = fit_feature_model(&d, 6).unwrap();
        let s = m.extract_vector(m.mean()).unwrap();
        assert_eq!(s, DVector::zeros(6));
    }

    #[test]
    fn feature_of_reconstruction_is_identity() {
        let c = small_world();
        let d = generate_dataset(&c, 200, 4).unwrap();
        let m = fit_feature_model(&d, 6).unwrap();
        let w = DVector::from_vec(vec![3.0, -1.0, 0.5, 20.0, -7.0, 0.01]);
        let s = m.extract_vector(&m.reconstruct(&w).unwrap()).unwrap();
        assert!((s - w).amax() < 1e-10);
    }

    #[test]
    fn dimension_mismatch_on_extract() {
        let c = small_world();
        let d = generate_dataset(&c, 100, 4).unwrap();
        let m = fit_feature_model(&d, 3).unwrap();
        let other = WorldConfig {
            n_points: 21,
            ..small_world()
        };
        let line = render_centerline(&other.home(), &other).unwrap();
        assert!(matches!(extract_feature(&line, &m), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn model_rejects_non_orthonormal_rows() {
        let mean = DVector::zeros(4);
        let proj = DMatrix::from_row_slice(1, 4, &[1.0, 1.0, 0.0, 0.0]);
        assert!(FeatureModel::new(mean, proj).is_err());
    }
}
