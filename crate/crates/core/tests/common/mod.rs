//! Helpers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rodservo::akf::{self, AkfConfig, FilterState, Measurement};
use rodservo::feature::{fit_feature_model, generate_dataset, FeatureModel, DEFAULT_DATASET_SIZE, DEFAULT_FEATURE_DIM};
use rodservo::world::WorldConfig;

pub const P: usize = 6;
pub const Q: usize = 3;

/// Time-invariant plant `ds = L du + noise` driven by uniform random moves.
pub struct LinearPlant {
    pub l: DMatrix<f64>,
    pub sigma: f64,
    pub amplitude: f64,
    rng: ChaCha8Rng,
}

impl LinearPlant {
    pub fn new(seed: u64, sigma: f64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = DMatrix::from_fn(P, Q, |_, _| StandardNormal.sample(&mut rng));
        Self {
            l,
            sigma,
            amplitude,
            rng,
        }
    }

    pub fn measure(&mut self) -> Measurement {
        let a = self.amplitude;
        let du = DVector::from_fn(Q, |_, _| self.rng.random_range(-a..=a));
        let noise = DVector::from_fn(P, |_, _| {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            self.sigma * z
        });
        Measurement {
            ds: &self.l * &du + noise,
            du,
        }
    }

    pub fn truth(&self) -> DVector<f64> {
        akf::vectorize(&self.l)
    }
}

/// Runs `steps` updates from a zero estimate and reports the state after each.
pub fn run_filter(plant: &mut LinearPlant, config: &AkfConfig, steps: usize, mut visit: impl FnMut(usize, &FilterState)) -> FilterState {
    let mut state = FilterState::from_jacobian(&DMatrix::zeros(P, Q), config);
    for k in 1..=steps {
        let m = plant.measure();
        state = akf::update(&state, &m, config).expect("linear plant update").0;
        visit(k, &state);
    }
    state
}

pub fn relative_error(state: &FilterState, plant: &LinearPlant) -> f64 {
    let truth = plant.truth();
    (&state.x_hat - &truth).norm() / truth.norm()
}

/// Feature model of the default world, fitted on the default dataset.
pub fn default_model() -> FeatureModel {
    let world = WorldConfig::default();
    let data = generate_dataset(&world, DEFAULT_DATASET_SIZE, world.seed).expect("dataset");
    fit_feature_model(&data, DEFAULT_FEATURE_DIM).expect("feature model")
}
