//! Stochastic oracle interface and synthetic nonconvex test problems.
//!
//! A problem is the expectation `f(x) = E_ξ[F(x, ξ)]`. Implementations
//! expose sampled oracles `F(x, ξ)`, `∇F(x, ξ)`, `∇²F(x, ξ)` (the sample ξ
//! is a pure function of a `u64` seed) together with the exact
//! expectations used for diagnostics.

mod additive;
mod config;
mod counting;
mod phase_retrieval;
mod saddle;

pub use additive::{make_additive_noise_variant, AdditiveNoise};
pub use config::{ProblemConfig, ProblemFamily};
pub use counting::{CountingOracle, OracleCounts, ValueOnly};
pub use phase_retrieval::{make_phase_retrieval, PhaseRetrieval, MAX_FINITE_SUM};
pub use saddle::{make_multiplicative_saddle, MultiplicativeSaddle};

use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default radius of the ball iterates are confined to.
pub const DEFAULT_BOX_RADIUS: f64 = 10.0;

/// A point `x ∈ ℝ^d` with finite coordinates and `d ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(DVector<f64>);

impl ParamVector {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Input("parameter vector must have d >= 1".into()));
        }
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("coordinate {i} is not finite")));
        }
        Ok(Self(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "dimension must be at least 1");
        Self(DVector::zeros(d))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Project `x` onto the centered ball of radius `radius`.
pub fn clamp_to_ball(mut x: DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = x.norm();
    if norm > radius {
        x *= radius / norm;
    }
    x
}

/// Lipschitz constants and noise scales of a problem.
///
/// Constants for problems without global bounds (quartics) are computed
/// over the ball `‖x‖ ≤ box_radius`; optimizers clamp iterates to that ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetadata {
    pub dim: usize,
    /// Value-Lipschitz constant `L`.
    pub lipschitz_value: f64,
    /// Gradient-Lipschitz constant `L_G`.
    pub lipschitz_grad: f64,
    /// Hessian-Lipschitz constant `L_H`.
    pub lipschitz_hess: f64,
    /// Lower bound `f*`.
    pub f_star: f64,
    /// Exact strong-growth constant, when analytically known.
    pub rho_true: Option<f64>,
    /// Hessian noise scale: `E‖∇²F − ∇²f‖_F⁴ ≤ sigma2⁴`.
    pub sigma2: f64,
    /// Bounded-variance gradient noise level: `E‖∇F − ∇f‖² ≤ grad_sigma²`.
    pub grad_sigma: Option<f64>,
    pub box_radius: f64,
}

impl ProblemMetadata {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Metadata("dim must be >= 1".into()));
        }
        if !(self.lipschitz_hess > 0.0) {
            return Err(Error::Metadata(format!(
                "L_H must be positive, got {}",
                self.lipschitz_hess
            )));
        }
        if !(self.lipschitz_grad > 0.0) {
            return Err(Error::Metadata(format!(
                "L_G must be positive, got {}",
                self.lipschitz_grad
            )));
        }
        if let Some(rho) = self.rho_true {
            if !(rho >= 1.0) {
                return Err(Error::Metadata(format!("rho must be >= 1, got {rho}")));
            }
        }
        if !(self.sigma2 >= 0.0) || !(self.lipschitz_value >= 0.0) {
            return Err(Error::Metadata("noise scales must be non-negative".into()));
        }
        if !(self.box_radius > 0.0) {
            return Err(Error::Metadata("box radius must be positive".into()));
        }
        Ok(())
    }
}

/// Which sampled derivative oracles a problem provides. The value oracle is
/// always available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub has_grad_oracle: bool,
    pub has_hess_oracle: bool,
}

impl Capabilities {
    pub const ALL: Capabilities = Capabilities {
        has_grad_oracle: true,
        has_hess_oracle: true,
    };
    pub const VALUE_ONLY: Capabilities = Capabilities {
        has_grad_oracle: false,
        has_hess_oracle: false,
    };
}

/// Sampled and exact oracles for `f(x) = E_ξ[F(x, ξ)]`.
///
/// Every sampled oracle is a pure function of `(x, seed)`, so
/// implementations are safe to call concurrently.
pub trait StochasticProblem: Send + Sync {
    fn meta(&self) -> &ProblemMetadata;

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn dim(&self) -> usize {
        self.meta().dim
    }

    /// `F(x, ξ)`.
    fn sample_value(&self, x: &DVector<f64>, seed: u64) -> f64;

    /// `∇F(x, ξ)`.
    fn sample_grad(&self, x: &DVector<f64>, seed: u64) -> Result<DVector<f64>>;

    /// `∇²F(x, ξ)`, symmetric.
    fn sample_hess(&self, x: &DVector<f64>, seed: u64) -> Result<DMatrix<f64>>;

    fn exact_value(&self, x: &DVector<f64>) -> f64;

    fn exact_grad(&self, x: &DVector<f64>) -> DVector<f64>;

    fn exact_hess(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

macro_rules! forward_problem {
    ($ty:ty) => {
        impl<P: StochasticProblem + ?Sized> StochasticProblem for $ty {
            fn meta(&self) -> &ProblemMetadata {
                (**self).meta()
            }
            fn capabilities(&self) -> Capabilities {
                (**self).capabilities()
            }
            fn sample_value(&self, x: &DVector<f64>, seed: u64) -> f64 {
                (**self).sample_value(x, seed)
            }
            fn sample_grad(&self, x: &DVector<f64>, seed: u64) -> Result<DVector<f64>> {
                (**self).sample_grad(x, seed)
            }
            fn sample_hess(&self, x: &DVector<f64>, seed: u64) -> Result<DMatrix<f64>> {
                (**self).sample_hess(x, seed)
            }
            fn exact_value(&self, x: &DVector<f64>) -> f64 {
                (**self).exact_value(x)
            }
            fn exact_grad(&self, x: &DVector<f64>) -> DVector<f64> {
                (**self).exact_grad(x)
            }
            fn exact_hess(&self, x: &DVector<f64>) -> DMatrix<f64> {
                (**self).exact_hess(x)
            }
        }
    };
}

forward_problem!(Box<P>);
forward_problem!(Arc<P>);
forward_problem!(&P);

pub(crate) fn check_dim(problem_dim: usize, x: &DVector<f64>) {
    assert_eq!(
        x.len(),
        problem_dim,
        "point dimension {} does not match problem dimension {problem_dim}",
        x.len()
    );
}
