//! One-shot tuning of the unnamed schedule constants.
//!
//! Constants are tuned at a single accuracy (`TUNING_EPSILON`) and then
//! frozen for the whole ε grid, so complexity slopes are not fitted per ε.

use sgc_core::{StochasticProblem, ParamVector};

use crate::error::{HarnessError, Result};
use crate::experiment::{cell_seed, run_cell, start_point};
use crate::spec::{ConstantsSpec, ExperimentSpec};

pub const TUNING_EPSILON: f64 = 0.2;

/// Candidate values for the batch constant `c`.
pub const C_GRID: [f64; 8] = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
/// Candidate values for the step-size constant `a0`.
pub const A0_GRID: [f64; 7] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];
/// Candidate values for the first Newton batch constant.
pub const MU0_GRID: [f64; 6] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0];

/// Quarter-decade grid `10^(k/4)` from 1e-4 to 1 for the horizon constant.
pub fn a1_grid() -> Vec<f64> {
    (-16..=0).map(|k| 10f64.powf(k as f64 / 4.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningReport {
    pub constants: ConstantsSpec,
    pub notes: Vec<String>,
}

fn rho_of(spec: &ExperimentSpec) -> Result<f64> {
    let p = spec.problem.build()?;
    Ok(p.meta().rho_true.unwrap_or(1.0))
}

fn gaps(spec: &ExperimentSpec, master_seed: u64) -> Result<Vec<f64>> {
    let p = spec.problem.build()?;
    spec.seeds
        .iter()
        .map(|&s| {
            let x0: ParamVector = start_point(spec, cell_seed(master_seed, s))?;
            Ok(p.exact_value(&x0) - p.meta().f_star)
        })
        .collect()
}

/// Tunes `c`, `a0`, `a1` of the first-order PSGD schedule on `spec`:
///
/// * `c`: smallest value giving relative minibatch noise `√((ρ−1)/n1) ≤ 1/4`;
/// * `a0`: smallest value giving `η ≤ 1/(2L_G)` without the `1/L_G` cap;
/// * `a1`: smallest value for which at least 80% of the seeds reach a
///   certified iterate with certified fraction ≥ 1/2 after burn-in.
pub fn tune_psgd_first_order(spec: &ExperimentSpec, master_seed: u64) -> Result<TuningReport> {
    let mut notes = Vec::new();
    let mut constants = spec.constants;
    let eps = TUNING_EPSILON;
    let l = (1.0 / eps).ln();
    let rho = rho_of(spec)?;

    constants.c = *C_GRID
        .iter()
        .find(|&&c| {
            let n1 = (512.0 * c * (rho - 1.0) * l).ceil().max(1.0);
            ((rho - 1.0) / n1).sqrt() <= 0.25
        })
        .ok_or_else(|| HarnessError::Validation("no batch constant meets the noise rule".into()))?;
    notes.push(format!("c = {}", constants.c));

    let problem = spec.problem.build()?;
    let l_g = problem.meta().lipschitz_grad;
    let min_gap = gaps(spec, master_seed)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let log_gap = (min_gap / (constants.delta * eps)).ln();
    constants.a0 = *A0_GRID
        .iter()
        .find(|&&a0| 1.0 / (l * l * a0 * log_gap) <= 0.5 / l_g)
        .ok_or_else(|| HarnessError::Validation("no step constant meets the step rule".into()))?;
    notes.push(format!("a0 = {}", constants.a0));

    let needed = (0.8 * spec.seeds.len() as f64).ceil() as usize;
    let mut trial = spec.clone();
    trial.epsilon_grid = vec![eps];
    trial.certify_every = 1;
    trial.stop_at_first_certified = false;
    trial.write_traces = false;
    for a1 in a1_grid() {
        trial.constants = ConstantsSpec { a1, ..constants };
        let passed = spec
            .seeds
            .iter()
            .filter(|&&s| {
                let r = run_cell(&trial, eps, s, master_seed).result;
                r.calls_to_first_certified.is_some() && r.sosp_fraction.is_some_and(|f| f >= 0.5)
            })
            .count();
        notes.push(format!("a1 = {a1:e}: {passed}/{} seeds pass", spec.seeds.len()));
        if passed >= needed {
            constants.a1 = a1;
            return Ok(TuningReport { constants, notes });
        }
    }
    Err(HarnessError::Validation(format!(
        "no horizon constant passes at epsilon = {eps}: {}",
        notes.join("; ")
    )))
}

/// Tunes the first Newton batch constant: smallest value giving relative
/// minibatch gradient noise `√((ρ−1)/n1) ≤ 1/2` at `TUNING_EPSILON`.
pub fn tune_scrn_higher_order(spec: &ExperimentSpec) -> Result<TuningReport> {
    let rho = rho_of(spec)?;
    let mut constants = spec.constants;
    constants.mu[0] = *MU0_GRID
        .iter()
        .find(|&&mu0| {
            let n1 = (mu0 * (rho - 1.0) / TUNING_EPSILON).ceil().max(1.0);
            ((rho - 1.0) / n1).sqrt() <= 0.5
        })
        .ok_or_else(|| HarnessError::Validation("no batch constant meets the noise rule".into()))?;
    Ok(TuningReport {
        notes: vec![format!("mu0 = {}", constants.mu[0])],
        constants,
    })
}
