//! Deterministic randomness.
//!
//! Every stochastic quantity in a run is drawn from a [`SeedStream`] built
//! from one master seed. The stream is split into independent ChaCha
//! sub-streams so that the sequence of sample seeds ξ does not depend on
//! how many Gaussian directions or perturbations were consumed in between.
//! A first-order and a zeroth-order run with the same master seed therefore
//! see the same ξ sequence.

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const XI_STREAM: u64 = 0;
const DIRECTION_STREAM: u64 = 1;
const PERTURBATION_STREAM: u64 = 2;
const REPORT_STREAM: u64 = 3;

/// SplitMix64 finalizer; used to derive well-mixed sub-seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine two seeds into one.
pub fn combine_seeds(a: u64, b: u64) -> u64 {
    mix64(mix64(a) ^ b.rotate_left(17))
}

/// Uniform draw in `[0, 1)` that is a pure function of `seed`.
pub fn unit_uniform(seed: u64) -> f64 {
    (mix64(seed) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A ChaCha generator keyed by `seed`, for oracles that need several
/// variates per sample.
pub fn keyed_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed))
}

/// Standard normal vector of length `d`.
pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Split random streams for one optimizer run.
#[derive(Debug, Clone)]
pub struct SeedStream {
    xi: ChaCha8Rng,
    directions: ChaCha8Rng,
    perturbations: ChaCha8Rng,
}

impl SeedStream {
    pub fn new(master_seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(id);
            rng
        };
        Self {
            xi: stream(XI_STREAM),
            directions: stream(DIRECTION_STREAM),
            perturbations: stream(PERTURBATION_STREAM),
        }
    }

    /// Seed for the next oracle sample ξ.
    pub fn next_xi(&mut self) -> u64 {
        self.xi.next_u64()
    }

    /// Next Gaussian direction u ~ N(0, I_d).
    pub fn direction(&mut self, d: usize) -> DVector<f64> {
        standard_normal_vector(&mut self.directions, d)
    }

    /// Next isotropic perturbation θ ~ N(0, r² I_d).
    pub fn perturbation(&mut self, d: usize, r: f64) -> DVector<f64> {
        standard_normal_vector(&mut self.perturbations, d) * r
    }
}

/// Generator for run-level reporting draws (e.g. the random output iterate),
/// independent of the optimizer's own streams.
pub fn report_rng(master_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(REPORT_STREAM);
    rng
}
