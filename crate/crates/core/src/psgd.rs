//! Perturbed stochastic gradient descent.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{RunOptions, RunTrace};
use crate::driver::{drive, DriverSpec, StepOutcome};
use crate::error::{Error, Result};
use crate::estimators::{fo_gradient, zo_gradient, OracleMode, ZoConfig};
use crate::problems::{clamp_to_ball, ParamVector, ProblemMetadata, StochasticProblem};
use crate::rng::SeedStream;
use crate::scrn::round_up;
use crate::RunError;

/// Step size, perturbation scale, batch size and horizon for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsgdConfig {
    pub eta: f64,
    /// Standard deviation of the isotropic perturbation.
    pub r: f64,
    pub n1: usize,
    /// Number of steps `T`.
    pub t_max: usize,
    pub box_radius: f64,
    pub mode: OracleMode,
}

impl PsgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::Config(format!("r must be >= 0, got {}", self.r)));
        }
        if self.n1 == 0 {
            return Err(Error::Config("n1 must be >= 1".into()));
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
                n2: 1,
            }),
        }
    }

    /// Oracle calls per step.
    pub fn step_cost(&self) -> u64 {
        match self.mode {
            OracleMode::Derivative => self.n1 as u64,
            OracleMode::ZerothOrder { .. } => 2 * self.n1 as u64,
        }
    }

    pub fn echo(&self) -> String {
        let mut s = format!(
            "algorithm=psgd\nmode={}\neta={}\nr={}\nn1={}\nT={}\nbox_radius={}",
            self.mode.label(),
            self.eta,
            self.r,
            self.n1,
            self.t_max,
            self.box_radius
        );
        if let OracleMode::ZerothOrder { nu } = self.mode {
            s.push_str(&format!("\nnu={nu}"));
        }
        s
    }
}

/// `x' = clamp(x − η(g + θ))` with `θ ~ N(0, r²I)`. Returns the new point
/// and the oracle calls spent on `g`.
pub fn psgd_step<P: StochasticProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    cfg: &PsgdConfig,
    seeds: &mut SeedStream,
) -> Result<(DVector<f64>, u64)> {
    cfg.validate()?;
    let est = match cfg.zo() {
        None => fo_gradient(p, x, cfg.n1, seeds)?,
        Some(zo) => zo_gradient(p, x, &zo, seeds)?,
    };
    let theta = seeds.perturbation(x.len(), cfg.r);
    let mut next = x.clone();
    next.axpy(-cfg.eta, &(est.g + theta), 1.0);
    let next = clamp_to_ball(next, cfg.box_radius);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("gradient step produced a non-finite iterate"));
    }
    Ok((next, est.oracle_calls))
}

/// Runs `cfg.t_max` steps from `x0`, recording certification rows every
/// `opts.certify_every` steps.
pub fn run_psgd<P: StochasticProblem + ?Sized>(
    p: &P,
    x0: &ParamVector,
    cfg: &PsgdConfig,
    opts: &RunOptions,
    seed: u64,
) -> Result<RunTrace, RunError> {
    if let Err(e) = cfg.validate() {
        return Err(RunError {
            source: e,
            trace: RunTrace::new(cfg.echo(), seed, false),
        });
    }
    let spec = DriverSpec {
        t_max: cfg.t_max,
        echo: format!("{}\nepsilon={}", cfg.echo(), opts.epsilon),
        cubic_columns: false,
        draw_random_iterate: false,
    };
    drive(p, x0, spec, opts, seed, |x, seeds| {
        let (x, oracle_calls) = psgd_step(p, x, cfg, seeds)?;
        Ok(StepOutcome {
            x,
            oracle_calls,
            h_norm: None,
            model_decrease: None,
            decrease_ok: true,
        })
    })
}

/// The unnamed constants of the step-size, batch and horizon formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConstants {
    pub a0: f64,
    pub a1: f64,
    pub c: f64,
    pub kappa: [f64; 10],
    /// Failure probability.
    pub delta: f64,
    pub epsilon: f64,
}

impl ScheduleConstants {
    /// All constants 1 and `delta = 0.1`.
    pub fn new(epsilon: f64) -> Self {
        Self {
            a0: 1.0,
            a1: 1.0,
            c: 1.0,
            kappa: [1.0; 10],
            delta: 0.1,
            epsilon,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    fn validate(&self) -> Result<()> {
        let eps = self.epsilon;
        if !(eps > 0.0 && eps < (-1.0f64).exp()) {
            return Err(Error::Schedule(format!(
                "epsilon must lie in (0, 1/e) so that log(1/epsilon) > 1, got {eps}"
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        let all_positive = [self.a0, self.a1, self.c]
            .iter()
            .chain(self.kappa.iter())
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive {
            return Err(Error::Config("schedule constants must be positive".into()));
        }
        Ok(())
    }
}

/// Unrounded schedule quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsgdSchedule {
    pub eta: f64,
    pub r: f64,
    pub n1: f64,
    pub t: f64,
    pub nu: Option<f64>,
}

impl PsgdSchedule {
    /// `T·n1` weighted by the per-query cost of the oracle mode.
    pub fn total_calls(&self) -> f64 {
        let per = if self.nu.is_some() { 2.0 } else { 1.0 };
        self.t * self.n1 * per
    }

    /// Batch size and step count rounded up, each at least 1.
    pub fn to_config(&self, box_radius: f64) -> Result<PsgdConfig> {
        let cfg = PsgdConfig {
            eta: self.eta,
            r: self.r,
            n1: round_up(self.n1)?,
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

fn log_gap(c: &ScheduleConstants, f0_gap: f64) -> Result<f64> {
    if !(f0_gap > 0.0) || !f0_gap.is_finite() {
        return Err(Error::Precondition(format!(
            "f(x0) - f* must be positive, got {f0_gap}"
        )));
    }
    let v = (f0_gap / (c.delta * c.epsilon)).ln();
    if !(v > 0.0) {
        return Err(Error::Schedule(format!(
            "log(gap / (delta * epsilon)) = {v} is not positive"
        )));
    }
    Ok(v)
}

/// Derivative-mode schedule.
///
/// `η = min(log(1/ε)⁻² / (a0·log(gap/(δε))), 1/L_G)`, `r = ε^1.5/log(1/ε)³`,
/// `T = a1·max(gap·T1/F1, gap/(ηε²))` with `T1 = ½log(1/ε)³/√ε` and
/// `F1 = ε^1.5/log(1/ε)⁷`. Under strong growth `n1 = 512c(ρ−1)log(1/ε)`;
/// without it (no `rho_true`) the bounded-variance batch
/// `n1 = 512c·σ²·log(1/ε)/ε²` is used with `σ = grad_sigma`.
pub fn first_order_schedule(
    c: &ScheduleConstants,
    meta: &ProblemMetadata,
    f0_gap: f64,
) -> Result<PsgdSchedule> {
    c.validate()?;
    let eps = c.epsilon;
    let l = (1.0 / eps).ln();
    let lg = log_gap(c, f0_gap)?;
    let eta = (1.0 / (l * l * c.a0 * lg)).min(1.0 / meta.lipschitz_grad);
    let n1 = match (meta.rho_true, meta.grad_sigma) {
        (Some(rho), _) => 512.0 * c.c * (rho - 1.0) * l,
        (None, Some(sigma)) => 512.0 * c.c * sigma * sigma * l / (eps * eps),
        (None, None) => {
            return Err(Error::Metadata(
                "batch size needs either rho_true or grad_sigma".into(),
            ))
        }
    };
    let t1 = 0.5 * l.powi(3) / eps.sqrt();
    let f1 = eps.powf(1.5) / l.powi(7);
    let t = c.a1 * (f0_gap * t1 / f1).max(f0_gap / (eta * eps * eps));
    Ok(PsgdSchedule {
        eta,
        r: eps.powf(1.5) / l.powi(3),
        n1,
        t,
        nu: None,
    })
}

/// Zeroth-order schedule.
///
/// `η = min(κ0/log(gap/(δε)), 1/L_G)`, `r = κ1ε`, `ν = κ4ε/(d·log(1/ε))`,
/// `T = κ9·max(gap·T0/F0, gap/(ηε²))` with `T0 = κ3·log(1/ε)²·log(d)²/√ε`
/// and `F0 = κ8ε^1.5`. With strong growth
/// `n1 = κ5·log(1/ε)⁵·d^1.5·√(ρ−1)/ε^2.5`; without it
/// `n1 = κ5·log(1/ε)⁵·d^1.5·σ/ε^3.5` with `σ = grad_sigma`.
pub fn zeroth_order_schedule(
    c: &ScheduleConstants,
    meta: &ProblemMetadata,
    f0_gap: f64,
    sgc: bool,
) -> Result<PsgdSchedule> {
    c.validate()?;
    let k = &c.kappa;
    let eps = c.epsilon;
    let l = (1.0 / eps).ln();
    let d = meta.dim as f64;
    let eta = (k[0] / log_gap(c, f0_gap)?).min(1.0 / meta.lipschitz_grad);
    let base = k[5] * l.powi(5) * d.powf(1.5);
    let n1 = if sgc {
        let rho = meta
            .rho_true
            .ok_or_else(|| Error::Metadata("strong growth schedule needs rho_true".into()))?;
        base * (rho - 1.0).sqrt() / eps.powf(2.5)
    } else {
        let sigma = meta
            .grad_sigma
            .ok_or_else(|| Error::Metadata("bounded-variance schedule needs grad_sigma".into()))?;
        base * sigma / eps.powf(3.5)
    };
    let t0 = k[3] * l * l * d.ln().powi(2) / eps.sqrt();
    let f0 = k[8] * eps.powf(1.5);
    let t = k[9] * (f0_gap * t0 / f0).max(f0_gap / (eta * eps * eps));
    Ok(PsgdSchedule {
        eta,
        r: k[1] * eps,
        n1,
        t,
        nu: Some(k[4] * eps / (d * l)),
    })
}

/// [`first_order_schedule`] rounded into a runnable configuration on the
/// problem's box.
pub fn schedule_first_order(
    c: &ScheduleConstants,
    meta: &ProblemMetadata,
    f0_gap: f64,
) -> Result<PsgdConfig> {
    first_order_schedule(c, meta, f0_gap)?.to_config(meta.box_radius)
}

/// [`zeroth_order_schedule`] rounded into a runnable configuration on the
/// problem's box.
pub fn schedule_zeroth_order(
    c: &ScheduleConstants,
    meta: &ProblemMetadata,
    f0_gap: f64,
    sgc: bool,
) -> Result<PsgdConfig> {
    zeroth_order_schedule(c, meta, f0_gap, sgc)?.to_config(meta.box_radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_multiplicative_saddle, make_phase_retrieval};

    fn exact_cfg(eta: f64) -> PsgdConfig {
        PsgdConfig {
            eta,
            r: 0.0,
            n1: 1,
            t_max: 1,
            box_radius: 10.0,
            mode: OracleMode::Derivative,
        }
    }

    #[test]
    fn exact_gradient_step() {
        let p = make_multiplicative_saddle(2, 1, 1.0, 0.0).unwrap();
        let x = DVector::from_vec(vec![0.0, 1.0]);
        let (next, calls) = psgd_step(&p, &x, &exact_cfg(0.1), &mut SeedStream::new(0)).unwrap();
        assert_eq!(next, DVector::from_vec(vec![0.0, 1.0 - 0.1]));
        assert_eq!(calls, 1);
    }

    #[test]
    fn interpolation_point_is_fixed() {
        let p = make_phase_retrieval(3, 20, 4).unwrap();
        let xs = p.planted().clone();
        let cfg = PsgdConfig { n1: 3, ..exact_cfg(0.05) };
        for seed in 0..20 {
            let (next, _) = psgd_step(&p, &xs, &cfg, &mut SeedStream::new(seed)).unwrap();
            assert_eq!(next, xs);
        }
    }

    #[test]
    fn deterministic_arm_has_unit_batch() {
        let p = make_multiplicative_saddle(3, 1, 1.0, 0.01).unwrap();
        let cfg = schedule_first_order(&ScheduleConstants::new(0.1), p.meta(), 1.0).unwrap();
        assert_eq!(cfg.n1, 1);
    }

    #[test]
    fn epsilon_above_inverse_e_is_undefined() {
        let p = make_multiplicative_saddle(3, 1, 2.0, 0.01).unwrap();
        let c = ScheduleConstants::new(0.5);
        assert!(matches!(
            schedule_first_order(&c, p.meta(), 1.0),
            Err(Error::Schedule(_))
        ));
        assert!(matches!(
            schedule_zeroth_order(&c, p.meta(), 1.0, true),
            Err(Error::Schedule(_))
        ));
    }

    #[test]
    fn zeroth_order_smoothing_radius() {
        let p = make_multiplicative_saddle(2, 1, 2.0, 0.0).unwrap();
        let s = zeroth_order_schedule(&ScheduleConstants::new(0.1), p.meta(), 1.0, true).unwrap();
        let expected = 0.1 / (2.0 * 10f64.ln());
        assert!((s.nu.unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_step_horizon_records_only_the_start() {
        let p = make_multiplicative_saddle(2, 1, 2.0, 0.0).unwrap();
        let cfg = PsgdConfig { t_max: 0, ..exact_cfg(0.1) };
        let x0 = ParamVector::from_slice(&[0.5, 0.5]).unwrap();
        let trace = run_psgd(&p, &x0, &cfg, &RunOptions::new(0.1), 1).unwrap();
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].t, 0);
        assert_eq!(trace.rows[0].oracle_calls, 0);
    }
}
