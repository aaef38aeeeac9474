//! Minibatch first/second-order estimators and zeroth-order Gaussian
//! smoothing estimators.
//!
//! Oracle accounting counts one sampled query as one call: a zeroth-order
//! gradient direction costs 2 value queries (`x + νu` and `x`, sharing the
//! same sample ξ) and a zeroth-order Hessian direction costs 3 (`x ± νu`
//! and `x`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{ParamVector, StochasticProblem};
use crate::rng::SeedStream;

/// Smallest accepted smoothing radius; below it the finite differences lose
/// all precision to cancellation.
pub const MIN_SMOOTHING_RADIUS: f64 = 1e-12;

/// Smoothing radius and batch sizes for zeroth-order estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoConfig {
    pub nu: f64,
    pub n1: usize,
    pub n2: usize,
}

impl ZoConfig {
    pub fn new(nu: f64, n1: usize, n2: usize) -> Result<Self> {
        let cfg = Self { nu, n1, n2 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.nu.is_finite() || self.nu < MIN_SMOOTHING_RADIUS {
            return Err(Error::Config(format!(
                "smoothing radius nu must be finite and >= {MIN_SMOOTHING_RADIUS:e}, got {}",
                self.nu
            )));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::Config("batch sizes n1, n2 must be >= 1".into()));
        }
        Ok(())
    }
}

/// How an optimizer queries the problem: sampled derivatives, or function
/// values through Gaussian smoothing with radius `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    Derivative,
    ZerothOrder { nu: f64 },
}

impl OracleMode {
    pub fn is_zeroth_order(&self) -> bool {
        matches!(self, OracleMode::ZerothOrder { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            OracleMode::Derivative => "derivative",
            OracleMode::ZerothOrder { .. } => "zeroth_order",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub g: DVector<f64>,
    pub oracle_calls: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessEstimate {
    pub h: DMatrix<f64>,
    pub oracle_calls: u64,
}

fn check_batch(n: usize, name: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::Config(format!("batch size {name} must be >= 1")));
    }
    Ok(())
}

/// Minibatch average of `n1` sampled gradients.
pub fn fo_gradient<P: StochasticProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    n1: usize,
    seeds: &mut SeedStream,
) -> Result<GradEstimate> {
    if !p.capabilities().has_grad_oracle {
        return Err(Error::Capability("gradient"));
    }
    check_batch(n1, "n1")?;
    let mut g = DVector::zeros(x.len());
    for _ in 0..n1 {
        g += p.sample_grad(x, seeds.next_xi())?;
    }
    g /= n1 as f64;
    Ok(GradEstimate {
        g,
        oracle_calls: n1 as u64,
    })
}

/// Gaussian-smoothing gradient estimate
/// `g = (1/n1) Σ (F(x + νu_i, ξ_i) − F(x, ξ_i)) / ν · u_i`.
pub fn zo_gradient<P: StochasticProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    cfg: &ZoConfig,
    seeds: &mut SeedStream,
) -> Result<GradEstimate> {
    cfg.validate()?;
    let d = x.len();
    let mut g = DVector::zeros(d);
    let mut shifted = DVector::zeros(d);
    for _ in 0..cfg.n1 {
        let seed = seeds.next_xi();
        let u = seeds.direction(d);
        shifted.copy_from(x);
        shifted.axpy(cfg.nu, &u, 1.0);
        let diff = (p.sample_value(&shifted, seed) - p.sample_value(x, seed)) / cfg.nu;
        g.axpy(diff, &u, 1.0);
    }
    g /= cfg.n1 as f64;
    Ok(GradEstimate {
        g,
        oracle_calls: 2 * cfg.n1 as u64,
    })
}

/// Minibatch average of `n2` sampled Hessians.
pub fn so_hessian<P: StochasticProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    n2: usize,
    seeds: &mut SeedStream,
) -> Result<HessEstimate> {
    if !p.capabilities().has_hess_oracle {
        return Err(Error::Capability("Hessian"));
    }
    check_batch(n2, "n2")?;
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    for _ in 0..n2 {
        h += p.sample_hess(x, seeds.next_xi())?;
    }
    h /= n2 as f64;
    symmetrize(&mut h);
    Ok(HessEstimate {
        h,
        oracle_calls: n2 as u64,
    })
}

/// Gaussian-smoothing Hessian estimate
/// `H = (1/n2) Σ 𝔥_i (u_i u_iᵀ − I)` with the central second difference
/// `𝔥_i = (F(x + νu_i) + F(x − νu_i) − 2F(x)) / (2ν²)`, symmetrized.
pub fn zo_hessian<P: StochasticProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    cfg: &ZoConfig,
    seeds: &mut SeedStream,
) -> Result<HessEstimate> {
    cfg.validate()?;
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    let mut plus = DVector::zeros(d);
    let mut minus = DVector::zeros(d);
    let mut diag_shift = 0.0;
    for _ in 0..cfg.n2 {
        let seed = seeds.next_xi();
        let u = seeds.direction(d);
        plus.copy_from(x);
        plus.axpy(cfg.nu, &u, 1.0);
        minus.copy_from(x);
        minus.axpy(-cfg.nu, &u, 1.0);
        let curvature = (p.sample_value(&plus, seed) + p.sample_value(&minus, seed)
            - 2.0 * p.sample_value(x, seed))
            / (2.0 * cfg.nu * cfg.nu);
        h.ger(curvature, &u, &u, 1.0);
        diag_shift += curvature;
    }
    for i in 0..d {
        h[(i, i)] -= diag_shift;
    }
    h /= cfg.n2 as f64;
    symmetrize(&mut h);
    Ok(HessEstimate {
        h,
        oracle_calls: 3 * cfg.n2 as u64,
    })
}

pub(crate) fn symmetrize(h: &mut DMatrix<f64>) {
    let d = h.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = avg;
            h[(j, i)] = avg;
        }
    }
}

/// Monte-Carlo strong-growth estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SgcEstimate {
    /// `max_x mean‖∇F(x, ξ)‖² / ‖∇f(x)‖²` over the supplied points.
    pub rho: f64,
    /// Standard error of the maximizing ratio.
    pub std_err: f64,
    /// Index of the maximizing point.
    pub worst_point: usize,
}

pub const MIN_SGC_TRIALS: usize = 1000;

pub fn estimate_sgc_rho<P: StochasticProblem + ?Sized>(
    p: &P,
    points: &[ParamVector],
    trials: usize,
    seeds: &mut SeedStream,
) -> Result<SgcEstimate> {
    if !p.capabilities().has_grad_oracle {
        return Err(Error::Capability("gradient"));
    }
    if trials < MIN_SGC_TRIALS {
        return Err(Error::Precondition(format!(
            "estimate_sgc_rho needs at least {MIN_SGC_TRIALS} trials, got {trials}"
        )));
    }
    if points.is_empty() {
        return Err(Error::Precondition("no points supplied".into()));
    }
    let mut best: Option<SgcEstimate> = None;
    for (k, x) in points.iter().enumerate() {
        let true_sq = p.exact_grad(x).norm_squared();
        if true_sq.sqrt() <= 1e-8 {
            return Err(Error::Precondition(format!(
                "point {k} has vanishing true gradient; the growth ratio is undefined"
            )));
        }
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..trials {
            let s = p.sample_grad(x, seeds.next_xi())?.norm_squared() / true_sq;
            sum += s;
            sum_sq += s * s;
        }
        let n = trials as f64;
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        let candidate = SgcEstimate {
            rho: mean,
            std_err: (var / n).sqrt(),
            worst_point: k,
        };
        if best.as_ref().map_or(true, |b| candidate.rho > b.rho) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("points is non-empty"))
}
