//! Stochastic cubic-regularized Newton with an exact subproblem solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{orient, RunOptions, RunTrace};
use crate::driver::{drive, DriverSpec, StepOutcome};
use crate::error::{Error, Result};
use crate::estimators::{fo_gradient, so_hessian, zo_gradient, zo_hessian, OracleMode, ZoConfig};
use crate::problems::{clamp_to_ball, ParamVector, ProblemMetadata, StochasticProblem};
use crate::rng::SeedStream;
use crate::RunError;

/// Default relative tolerance on the step radius.
pub const DEFAULT_CUBIC_TOL: f64 = 1e-10;

const NEWTON_ITERS: usize = 200;
const BISECTION_ITERS: usize = 200;

/// `m(h) = gᵀh + ½ hᵀHh + (M/6)‖h‖³`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicModel {
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
    pub m: f64,
}

impl CubicModel {
    pub fn new(g: DVector<f64>, h: DMatrix<f64>, m: f64) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Config(format!("cubic penalty M must be positive, got {m}")));
        }
        if h.nrows() != g.len() || h.ncols() != g.len() || g.is_empty() {
            return Err(Error::Input(format!(
                "model dimensions disagree: g has {}, H is {}x{}",
                g.len(),
                h.nrows(),
                h.ncols()
            )));
        }
        let model = Self { g, h, m };
        model.check_symmetry()?;
        Ok(model)
    }

    fn check_symmetry(&self) -> Result<()> {
        let d = self.g.len();
        let scale = self.h.amax().max(1.0);
        for i in 0..d {
            for j in (i + 1)..d {
                if (self.h[(i, j)] - self.h[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::Input("model Hessian is not symmetric".into()));
                }
            }
        }
        Ok(())
    }

    /// `m(h) − m(0)`.
    pub fn value(&self, step: &DVector<f64>) -> f64 {
        let n = step.norm();
        self.g.dot(step) + 0.5 * step.dot(&(&self.h * step)) + self.m / 6.0 * n * n * n
    }

    /// `‖g + Hh + (M/2)‖h‖h‖`.
    pub fn stationarity_residual(&self, step: &DVector<f64>) -> f64 {
        (&self.g + &self.h * step + step * (0.5 * self.m * step.norm())).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSolution {
    pub h_star: DVector<f64>,
    /// `m(h*) − m(0) ≤ 0`.
    pub model_decrease: f64,
    /// `‖h*‖`.
    pub radius: f64,
    /// `(M/2)‖h*‖`.
    pub multiplier: f64,
    /// The gradient had no component on the minimum eigenspace and the
    /// step required an explicit eigenvector component.
    pub hard_case: bool,
}

/// Global minimizer of a cubic model.
///
/// Diagonalizes `H = QΛQᵀ` and finds the radius `s = ‖h‖` solving
/// `‖(H + (M/2)sI)⁻¹g‖ = s` on `s > max(0, −2λ_min/M)` by safeguarded
/// Newton iteration with bisection fallback. When the gradient is
/// orthogonal to the minimum eigenspace and the regular branch is too
/// short, the step is completed along the minimum eigenvector, with the
/// sign chosen so its first nonzero coordinate is positive.
pub fn solve_cubic(model: &CubicModel, tol: f64) -> Result<CubicSolution> {
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(Error::Config(format!("tol must lie in (0, 1e-4], got {tol}")));
    }
    if model.g.iter().chain(model.h.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numerical("cubic model has non-finite entries"));
    }
    let d = model.g.len();
    let m = model.m;
    let eig = SymmetricEigen::new(model.h.clone());
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("eigendecomposition produced non-finite values"));
    }
    let lam = &eig.eigenvalues;
    let q = &eig.eigenvectors;
    let gt = q.transpose() * &model.g;
    let g_norm = model.g.norm();
    let lam_min = lam.min();
    let lam_scale = lam.amax().max(1.0);
    let s_lo = (-2.0 * lam_min / m).max(0.0);

    let finish = |step: DVector<f64>, hard_case: bool| {
        let radius = step.norm();
        CubicSolution {
            model_decrease: model.value(&step),
            radius,
            multiplier: 0.5 * m * radius,
            h_star: step,
            hard_case,
        }
    };

    if g_norm == 0.0 && lam_min >= 0.0 {
        return Ok(finish(DVector::zeros(d), false));
    }

    // Components on the minimum eigenspace below this size are treated as
    // zero; dropping them perturbs the stationarity residual by at most
    // that amount.
    let negligible = 1e-12 * g_norm.max(1.0);
    let in_min_space = |i: usize| lam[i] - lam_min <= 1e-12 * lam_scale;
    let orthogonal = (0..d).all(|i| !in_min_space(i) || gt[i].abs() <= negligible);
    let active: Vec<usize> = if orthogonal && lam_min < 0.0 {
        (0..d).filter(|&i| !in_min_space(i)).collect()
    } else {
        (0..d).collect()
    };

    let coords = |s: f64| -> DVector<f64> {
        let shift = 0.5 * m * s;
        let mut c = DVector::zeros(d);
        for &i in &active {
            c[i] = -gt[i] / (lam[i] + shift);
        }
        c
    };

    if orthogonal && lam_min < 0.0 {
        let p = coords(s_lo);
        let p_norm = p.norm();
        if p_norm <= s_lo {
            let k = (0..d).find(|&i| in_min_space(i)).expect("minimum eigenspace is non-empty");
            let mut v = q.column(k).into_owned();
            orient(&mut v);
            let tau = (s_lo * s_lo - p_norm * p_norm).max(0.0).sqrt();
            let step = q * p + v * tau;
            return Ok(finish(step, true));
        }
    }

    // Regular case: φ(s) = ‖c(s)‖ − s is convex and decreasing on (s_lo, ∞).
    let phi = |s: f64| -> (f64, f64) {
        let shift = 0.5 * m * s;
        let (mut n2, mut dn2) = (0.0, 0.0);
        for &i in &active {
            let den = lam[i] + shift;
            let t = gt[i] * gt[i] / (den * den);
            n2 += t;
            dn2 -= m * t / den;
        }
        let n = n2.sqrt();
        let dn = if n > 0.0 { 0.5 * dn2 / n } else { 0.0 };
        (n - s, dn - 1.0)
    };

    let mut lo = s_lo;
    let mut hi = s_lo + (2.0 * g_norm / m).sqrt();
    while phi(hi).0 > 0.0 {
        hi = s_lo + 2.0 * (hi - s_lo);
    }
    // Stop on the secular residual: the stationarity residual of the
    // returned step is (M/2)|φ(s)|‖c(s)‖.
    let done = |f: f64, s: f64, lo: f64, hi: f64| {
        f.abs() <= tol * s.max(1.0) || hi - lo <= f64::EPSILON * s.max(1.0)
    };
    let mut s = hi;
    let mut converged = false;
    for _ in 0..NEWTON_ITERS {
        let (f, df) = phi(s);
        if f > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        if done(f, s, lo, hi) {
            converged = true;
            break;
        }
        let mut next = s - f / df;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        s = next;
    }
    if !converged {
        for _ in 0..BISECTION_ITERS {
            s = 0.5 * (lo + hi);
            let f = phi(s).0;
            if f > 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            if done(f, s, lo, hi) {
                break;
            }
        }
    }
    Ok(finish(q * coords(s), false))
}

/// Cubic-regularized Newton settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrnConfig {
    /// Cubic penalty `M`.
    pub m: f64,
    pub n1: usize,
    pub n2: usize,
    /// Number of steps `T`.
    pub t_max: usize,
    pub box_radius: f64,
    pub mode: OracleMode,
}

impl ScrnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) || !self.m.is_finite() {
            return Err(Error::Config(format!("M must be positive, got {}", self.m)));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::Config("n1 and n2 must be >= 1".into()));
        }
        if !(self.box_radius > 0.0) {
            return Err(Error::Config("box_radius must be positive".into()));
        }
        if let Some(zo) = self.zo() {
            zo.validate()?;
        }
        Ok(())
    }

    pub fn zo(&self) -> Option<ZoConfig> {
        match self.mode {
            OracleMode::Derivative => None,
            OracleMode::ZerothOrder { nu } => Some(ZoConfig {
                nu,
                n1: self.n1,
                n2: self.n2,
            }),
        }
    }

    /// Oracle calls per step.
    pub fn step_cost(&self) -> u64 {
        match self.mode {
            OracleMode::Derivative => (self.n1 + self.n2) as u64,
            OracleMode::ZerothOrder { .. } => (2 * self.n1 + 3 * self.n2) as u64,
        }
    }

    pub fn echo(&self) -> String {
        let mut s = format!(
            "algorithm=scrn\nmode={}\nM={}\nn1={}\nn2={}\nT={}\nbox_radius={}",
            self.mode.label(),
            self.m,
            self.n1,
            self.n2,
            self.t_max,
            self.box_radius
        );
        if let OracleMode::ZerothOrder { nu } = self.mode {
            s.push_str(&format!("\nnu={nu}"));
        }
        s
    }
}

/// Result of one cubic-regularized step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScrnStep {
    pub x: DVector<f64>,
    pub oracle_calls: u64,
    pub solution: CubicSolution,
}

pub fn scrn_step<P: StochasticProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    cfg: &ScrnConfig,
    seeds: &mut SeedStream,
) -> Result<ScrnStep> {
    cfg.validate()?;
    let (g, h, calls) = match cfg.zo() {
        None => {
            let g = fo_gradient(p, x, cfg.n1, seeds)?;
            let h = so_hessian(p, x, cfg.n2, seeds)?;
            (g.g, h.h, g.oracle_calls + h.oracle_calls)
        }
        Some(zo) => {
            let g = zo_gradient(p, x, &zo, seeds)?;
            let h = zo_hessian(p, x, &zo, seeds)?;
            (g.g, h.h, g.oracle_calls + h.oracle_calls)
        }
    };
    let model = CubicModel::new(g, h, cfg.m)?;
    let solution = solve_cubic(&model, DEFAULT_CUBIC_TOL)?;
    let next = clamp_to_ball(x + &solution.h_star, cfg.box_radius);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("cubic step produced a non-finite iterate"));
    }
    Ok(ScrnStep {
        x: next,
        oracle_calls: calls,
        solution,
    })
}

/// Slack allowed on the `−(M/12)‖h‖³` model decrease.
pub const DECREASE_SLACK: f64 = 1e-8;

/// Runs `cfg.t_max` steps from `x1`. Rows carry the step length and model
/// decrease of the step that produced them; the trace also certifies the
/// iterate after a uniformly drawn step count in `{1, …, T}`.
pub fn run_scrn<P: StochasticProblem + ?Sized>(
    p: &P,
    x1: &ParamVector,
    cfg: &ScrnConfig,
    opts: &RunOptions,
    seed: u64,
) -> Result<RunTrace, RunError> {
    if let Err(e) = cfg.validate() {
        return Err(RunError {
            source: e,
            trace: RunTrace::new(cfg.echo(), seed, true),
        });
    }
    let spec = DriverSpec {
        t_max: cfg.t_max,
        echo: format!("{}\nepsilon={}", cfg.echo(), opts.epsilon),
        cubic_columns: true,
        draw_random_iterate: true,
    };
    drive(p, x1, spec, opts, seed, |x, seeds| {
        let out = scrn_step(p, x, cfg, seeds)?;
        let r = out.solution.radius;
        let bound = -(cfg.m / 12.0) * r * r * r + DECREASE_SLACK;
        Ok(StepOutcome {
            decrease_ok: out.solution.model_decrease <= bound,
            h_norm: Some(r),
            model_decrease: Some(out.solution.model_decrease),
            x: out.x,
            oracle_calls: out.oracle_calls,
        })
    })
}

/// Unrounded schedule quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScrnSchedule {
    pub m: f64,
    pub n1: f64,
    pub n2: f64,
    pub t: f64,
    pub nu: Option<f64>,
}

impl ScrnSchedule {
    /// `T·(n1 + n2)` weighted by the per-query cost of the oracle mode.
    pub fn total_calls(&self) -> f64 {
        match self.nu {
            None => self.t * (self.n1 + self.n2),
            Some(_) => self.t * (2.0 * self.n1 + 3.0 * self.n2),
        }
    }

    /// Batch sizes and step count rounded up, each at least 1.
    pub fn to_config(&self, box_radius: f64) -> Result<ScrnConfig> {
        let cfg = ScrnConfig {
            m: self.m,
            n1: round_up(self.n1)?,
            n2: round_up(self.n2)?,
            t_max: round_up(self.t)?,
            box_radius,
            mode: match self.nu {
                None => OracleMode::Derivative,
                Some(nu) => OracleMode::ZerothOrder { nu },
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) fn round_up(v: f64) -> Result<usize> {
    if !v.is_finite() || v > 1e15 {
        return Err(Error::Schedule(format!("schedule quantity {v:e} is too large")));
    }
    Ok((v.ceil() as usize).max(1))
}

/// Schedule constants and formulas for the cubic-regularized method.
///
/// Derivative mode: `T = 144·gap/(Mε^1.5)`, `n1 = μ0(ρ−1)/ε`, `n2 = 1/ε`,
/// `M = max(L_H, 1/4, 0.004·L_G·ε^¼ + σ2·ε^¼, 40σ2)`.
/// Zeroth-order mode: `T = μ0·gap/(Mε^1.5)`, `n1 = μ1(d+5)/ε`,
/// `n2 = μ2(1 + 2 log 2d)(d+16)⁴/ε`, `ν = μ3ε/(d+16)^2.5`, `M = μ4`.
pub fn scrn_schedule(
    epsilon: f64,
    meta: &ProblemMetadata,
    f0_gap: f64,
    zeroth_order: bool,
    mu: [f64; 5],
) -> Result<ScrnSchedule> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Schedule(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(f0_gap > 0.0) || !f0_gap.is_finite() {
        return Err(Error::Precondition(format!(
            "f(x1) - f* must be positive, got {f0_gap}"
        )));
    }
    if mu.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Config("schedule constants mu must be positive".into()));
    }
    let e15 = epsilon.powf(1.5);
    if zeroth_order {
        let d = meta.dim as f64;
        let m = mu[4];
        Ok(ScrnSchedule {
            m,
            n1: mu[1] * (d + 5.0) / epsilon,
            n2: mu[2] * (1.0 + 2.0 * (2.0 * d).ln()) * (d + 16.0).powi(4) / epsilon,
            t: mu[0] * f0_gap / (m * e15),
            nu: Some(mu[3] * epsilon / (d + 16.0).powf(2.5)),
        })
    } else {
        let rho = meta.rho_true.ok_or_else(|| {
            Error::Metadata("derivative schedule needs the strong growth constant".into())
        })?;
        let e14 = epsilon.powf(0.25);
        let m = meta
            .lipschitz_hess
            .max(0.25)
            .max(0.004 * meta.lipschitz_grad * e14 + meta.sigma2 * e14)
            .max(40.0 * meta.sigma2);
        Ok(ScrnSchedule {
            m,
            n1: mu[0] * (rho - 1.0) / epsilon,
            n2: 1.0 / epsilon,
            t: 144.0 * f0_gap / (m * e15),
            nu: None,
        })
    }
}

/// [`scrn_schedule`] rounded into a runnable configuration on the problem's box.
pub fn schedule_scrn(
    epsilon: f64,
    meta: &ProblemMetadata,
    f0_gap: f64,
    zeroth_order: bool,
    mu: [f64; 5],
) -> Result<ScrnConfig> {
    scrn_schedule(epsilon, meta, f0_gap, zeroth_order, mu)?.to_config(meta.box_radius)
}
