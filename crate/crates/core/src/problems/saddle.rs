use nalgebra::{DMatrix, DVector};

use super::{check_dim, ProblemMetadata, StochasticProblem, DEFAULT_BOX_RADIUS};
use crate::error::{Error, Result};
use crate::rng::unit_uniform;

/// Strict-saddle problem with multiplicative noise.
///
/// `F(x, ξ) = ξ·f(x)` with `f(x) = ½ xᵀAx + c‖x‖⁴`, where
/// `A = diag(−1, …, −1, +1, …, +1)` has `neg_count` negative entries. The
/// scalar `ξ ∈ {0, ρ}` takes the value `ρ` with probability `1/ρ`, so
/// `E[ξ] = 1` and `E[ξ²] = ρ`. Hence `E‖∇F‖² = ρ‖∇f‖²` holds with equality
/// at every point and the strong growth constant is exactly `ρ`.
///
/// The origin is a strict saddle. With `c > 0` the minimizers lie on the
/// sphere of radius `1/(2√c)` inside the negative-curvature subspace and
/// `f* = −1/(16c)`. Lipschitz constants are computed over the ball of
/// radius `box_radius`.
#[derive(Debug, Clone)]
pub struct MultiplicativeSaddle {
    curvature: Vec<f64>,
    neg_count: usize,
    rho: f64,
    quartic: f64,
    meta: ProblemMetadata,
}

/// `make_multiplicative_saddle` with the default box radius.
pub fn make_multiplicative_saddle(
    d: usize,
    neg_count: usize,
    rho: f64,
    quartic_coeff: f64,
) -> Result<MultiplicativeSaddle> {
    MultiplicativeSaddle::new(d, neg_count, rho, quartic_coeff, DEFAULT_BOX_RADIUS)
}

impl MultiplicativeSaddle {
    pub fn new(
        d: usize,
        neg_count: usize,
        rho: f64,
        quartic_coeff: f64,
        box_radius: f64,
    ) -> Result<Self> {
        if neg_count < 1 || neg_count >= d {
            return Err(Error::Config(format!(
                "neg_count must satisfy 1 <= neg_count < d, got neg_count={neg_count}, d={d}"
            )));
        }
        if !(rho >= 1.0) || !rho.is_finite() {
            return Err(Error::Config(format!("rho must be a finite value >= 1, got {rho}")));
        }
        if !(quartic_coeff >= 0.0) || !quartic_coeff.is_finite() {
            return Err(Error::Config(format!(
                "quartic_coeff must be >= 0, got {quartic_coeff}"
            )));
        }
        if !(box_radius > 0.0) || !box_radius.is_finite() {
            return Err(Error::Config(format!("r_box must be positive, got {box_radius}")));
        }
        let curvature = (0..d)
            .map(|i| if i < neg_count { -1.0 } else { 1.0 })
            .collect();
        let meta = saddle_metadata(d, rho, quartic_coeff, box_radius);
        meta.validate()?;
        Ok(Self {
            curvature,
            neg_count,
            rho,
            quartic: quartic_coeff,
            meta,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn neg_count(&self) -> usize {
        self.neg_count
    }

    pub fn quartic_coeff(&self) -> f64 {
        self.quartic
    }

    /// Diagonal of `A`.
    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    /// The noise multiplier ξ for a given sample seed.
    pub fn xi(&self, seed: u64) -> f64 {
        if self.rho == 1.0 {
            1.0
        } else if unit_uniform(seed) < 1.0 / self.rho {
            self.rho
        } else {
            0.0
        }
    }

    /// A global minimizer of `f` (on the first negative axis), when `c > 0`.
    pub fn minimizer(&self) -> Option<DVector<f64>> {
        (self.quartic > 0.0).then(|| {
            let mut x = DVector::zeros(self.curvature.len());
            x[0] = 0.5 / self.quartic.sqrt();
            x
        })
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let mut quad = 0.0;
        let mut sq = 0.0;
        for (a, v) in self.curvature.iter().zip(x.iter()) {
            quad += a * v * v;
            sq += v * v;
        }
        0.5 * quad + self.quartic * sq * sq
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let scale = 4.0 * self.quartic * x.norm_squared();
        DVector::from_iterator(
            x.len(),
            self.curvature
                .iter()
                .zip(x.iter())
                .map(|(a, v)| (a + scale) * v),
        )
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = x.len();
        let shift = 4.0 * self.quartic * x.norm_squared();
        let mut h = (x * x.transpose()) * (8.0 * self.quartic);
        for i in 0..d {
            h[(i, i)] += self.curvature[i] + shift;
        }
        h
    }
}

fn saddle_metadata(d: usize, rho: f64, c: f64, r: f64) -> ProblemMetadata {
    // max ‖∇f‖ and max ‖∇²f‖ over the ball are attained along a +1 axis.
    let max_grad = r + 4.0 * c * r.powi(3);
    let lipschitz_grad = 1.0 + 12.0 * c * r * r;
    // ‖D³f‖ ≤ 24c‖x‖; a quadratic has a zero Hessian-Lipschitz constant and
    // any positive value bounds it, so use 1.
    let lipschitz_hess = if c > 0.0 { 24.0 * c * r } else { 1.0 };
    let f_star = if c > 0.0 {
        let s2 = (1.0 / (4.0 * c)).min(r * r);
        -0.5 * s2 + c * s2 * s2
    } else {
        -0.5 * r * r
    };
    let d_f = d as f64;
    let max_hess_frob = d_f.sqrt() + 4.0 * c * r * r * d_f.sqrt() + 8.0 * c * r * r;
    // E(ξ − 1)⁴ for the two-point law.
    let fourth = (1.0 - 1.0 / rho) + (rho - 1.0).powi(4) / rho;
    ProblemMetadata {
        dim: d,
        lipschitz_value: rho * max_grad,
        lipschitz_grad,
        lipschitz_hess,
        f_star,
        rho_true: Some(rho),
        sigma2: fourth.powf(0.25) * max_hess_frob,
        grad_sigma: Some((rho - 1.0).sqrt() * max_grad),
        box_radius: r,
    }
}

impl StochasticProblem for MultiplicativeSaddle {
    fn meta(&self) -> &ProblemMetadata {
        &self.meta
    }

    fn sample_value(&self, x: &DVector<f64>, seed: u64) -> f64 {
        check_dim(self.meta.dim, x);
        self.xi(seed) * self.value(x)
    }

    fn sample_grad(&self, x: &DVector<f64>, seed: u64) -> Result<DVector<f64>> {
        check_dim(self.meta.dim, x);
        Ok(self.gradient(x) * self.xi(seed))
    }

    fn sample_hess(&self, x: &DVector<f64>, seed: u64) -> Result<DMatrix<f64>> {
        check_dim(self.meta.dim, x);
        Ok(self.hessian(x) * self.xi(seed))
    }

    fn exact_value(&self, x: &DVector<f64>) -> f64 {
        check_dim(self.meta.dim, x);
        self.value(x)
    }

    fn exact_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        check_dim(self.meta.dim, x);
        self.gradient(x)
    }

    fn exact_hess(&self, x: &DVector<f64>) -> DMatrix<f64> {
        check_dim(self.meta.dim, x);
        self.hessian(x)
    }
}
