//! Perturbed stochastic gradient descent and stochastic cubic-regularized
//! Newton for nonconvex problems whose stochastic gradients satisfy a strong
//! growth condition `E‖∇F(x, ξ)‖² ≤ ρ‖∇f(x)‖²`.
//!
//! Both methods run either on sampled derivatives or on function values
//! only (Gaussian-smoothing estimators). Progress is certified against the
//! exact objective: a point is an ε-second-order stationary point when
//! `max(√‖∇f‖, −λ_min(∇²f)/L_H) ≤ √ε`.

pub mod diagnostics;
mod driver;
pub mod error;
pub mod estimators;
pub mod problems;
pub mod psgd;
pub mod rng;
pub mod scrn;

pub use diagnostics::{
    certify, min_eigenvalue, sosp_fraction, RandomIterate, RunOptions, RunTrace, SospCertificate,
    TraceRow,
};
pub use error::{Error, Result};
pub use estimators::{
    estimate_sgc_rho, fo_gradient, so_hessian, zo_gradient, zo_hessian, GradEstimate,
    HessEstimate, OracleMode, SgcEstimate, ZoConfig,
};
pub use problems::{
    make_additive_noise_variant, make_multiplicative_saddle, make_phase_retrieval, ParamVector,
    ProblemConfig, ProblemFamily, ProblemMetadata, StochasticProblem,
};
pub use psgd::{
    psgd_step, run_psgd, schedule_first_order, schedule_zeroth_order, PsgdConfig, PsgdSchedule,
    ScheduleConstants,
};
pub use rng::SeedStream;
pub use scrn::{
    run_scrn, schedule_scrn, scrn_step, solve_cubic, CubicModel, CubicSolution, ScrnConfig,
    ScrnSchedule,
};

/// A run that failed part-way, with the rows recorded before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunError {
    pub source: Error,
    pub trace: RunTrace,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} trace rows)", self.source, self.trace.rows.len())
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}
