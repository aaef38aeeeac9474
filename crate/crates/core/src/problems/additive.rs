use nalgebra::{DMatrix, DVector};

use super::{Capabilities, ProblemMetadata, StochasticProblem};
use crate::error::{Error, Result};
use crate::rng::{combine_seeds, keyed_rng, standard_normal_vector};

const NOISE_SALT: u64 = 0xA5D1_7F0E_5EED_0001;

/// Bounded-variance control arm: adds a random linear term to the wrapped
/// problem.
///
/// `F(x, ξ) = F_p(x, ξ) + σ zᵀx` with `z ~ N(0, I_d)` drawn from the same
/// seed as ξ. Values and gradients stay consistent (`∇F = ∇F_p + σz`), the
/// Hessian is unchanged, and the added gradient noise has second moment
/// `dσ²` at every point, including stationary points of `f`. The strong
/// growth condition therefore fails whenever `σ > 0`.
#[derive(Debug, Clone)]
pub struct AdditiveNoise<P> {
    inner: P,
    sigma: f64,
    meta: ProblemMetadata,
}

pub fn make_additive_noise_variant<P: StochasticProblem>(
    p: P,
    sigma: f64,
) -> Result<AdditiveNoise<P>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut meta = p.meta().clone();
    if sigma > 0.0 {
        let d = meta.dim as f64;
        meta.rho_true = None;
        meta.lipschitz_value += sigma * d.sqrt();
        meta.grad_sigma = meta
            .grad_sigma
            .map(|s| (s * s + d * sigma * sigma).sqrt());
    }
    Ok(AdditiveNoise {
        inner: p,
        sigma,
        meta,
    })
}

impl<P: StochasticProblem> AdditiveNoise<P> {
    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The noise direction `z` for a sample seed.
    pub fn noise(&self, seed: u64) -> DVector<f64> {
        let mut rng = keyed_rng(combine_seeds(seed, NOISE_SALT));
        standard_normal_vector(&mut rng, self.meta.dim)
    }
}

impl<P: StochasticProblem> StochasticProblem for AdditiveNoise<P> {
    fn meta(&self) -> &ProblemMetadata {
        &self.meta
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn sample_value(&self, x: &DVector<f64>, seed: u64) -> f64 {
        let base = self.inner.sample_value(x, seed);
        if self.sigma == 0.0 {
            return base;
        }
        base + self.sigma * self.noise(seed).dot(x)
    }

    fn sample_grad(&self, x: &DVector<f64>, seed: u64) -> Result<DVector<f64>> {
        let base = self.inner.sample_grad(x, seed)?;
        if self.sigma == 0.0 {
            return Ok(base);
        }
        Ok(base + self.noise(seed) * self.sigma)
    }

    fn sample_hess(&self, x: &DVector<f64>, seed: u64) -> Result<DMatrix<f64>> {
        self.inner.sample_hess(x, seed)
    }

    fn exact_value(&self, x: &DVector<f64>) -> f64 {
        self.inner.exact_value(x)
    }

    fn exact_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.exact_grad(x)
    }

    fn exact_hess(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.exact_hess(x)
    }
}
