use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sgc_core::problems::clamp_to_ball;
use sgc_core::rng::{combine_seeds, keyed_rng, standard_normal_vector};
use sgc_core::{
    diagnostics::sosp_fraction, run_psgd, run_scrn, scrn::scrn_schedule, ParamVector,
    ProblemMetadata, RunOptions, RunTrace, StochasticProblem,
};

use crate::error::{HarnessError, Result};
use crate::plot::emit_plot;
use crate::spec::{Algorithm, Arm, ExperimentSpec, OracleKind};
use crate::summary::{summarize_cells, write_summary, SummaryRow};

const START_SALT: u64 = 0x5747_A2D0_0000_0001;

/// Worker pool size and the seed mixed into every cell seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunnerOptions {
    pub workers: usize,
    pub master_seed: u64,
}

impl Default for RunnerOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// Outcome of one (ε, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub algorithm: Algorithm,
    pub mode: OracleKind,
    pub sgc_arm: bool,
    pub epsilon: f64,
    pub seed: u64,
    pub status: CellStatus,
    pub error: String,
    /// Steps taken; equals the scheduled horizon unless the run stopped early.
    pub steps: usize,
    pub horizon: usize,
    pub total_calls: u64,
    pub calls_to_first_certified: Option<u64>,
    pub sosp_fraction: Option<f64>,
    pub random_iterate_certified: Option<bool>,
    pub decrease_violations: usize,
    pub trace_file: String,
}

impl CellResult {
    pub fn arm(&self) -> Arm {
        Arm {
            algorithm: self.algorithm,
            mode: self.mode,
            sgc_arm: self.sgc_arm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
}

/// Seed of the optimizer streams for a cell.
pub fn cell_seed(master_seed: u64, seed: u64) -> u64 {
    combine_seeds(master_seed, seed)
}

/// Start point of a cell: the explicit point, or `start_radius` times a
/// uniformly random unit direction.
pub fn start_point(spec: &ExperimentSpec, run_seed: u64) -> Result<ParamVector> {
    if let Some(p) = &spec.start_point {
        return Ok(ParamVector::from_slice(p)?);
    }
    let mut rng = keyed_rng(combine_seeds(run_seed, START_SALT));
    let mut u = standard_normal_vector(&mut rng, spec.problem.dim);
    u *= spec.start_radius / u.norm();
    Ok(ParamVector::new(clamp_to_ball(u, spec.problem.r_box))?)
}

fn schedule_metadata(spec: &ExperimentSpec, meta: &ProblemMetadata) -> ProblemMetadata {
    let mut meta = meta.clone();
    if !spec.sgc_arm {
        meta.rho_true = None;
    }
    meta
}

/// The outcome of one cell together with its full trace.
pub struct CellRun {
    pub result: CellResult,
    pub trace: Option<RunTrace>,
}

/// Runs one (ε, seed) cell without touching the file system.
pub fn run_cell(spec: &ExperimentSpec, epsilon: f64, seed: u64, master_seed: u64) -> CellRun {
    let mut result = CellResult {
        algorithm: spec.algorithm,
        mode: spec.mode,
        sgc_arm: spec.sgc_arm,
        epsilon,
        seed,
        status: CellStatus::Failed,
        error: String::new(),
        steps: 0,
        horizon: 0,
        total_calls: 0,
        calls_to_first_certified: None,
        sosp_fraction: None,
        random_iterate_certified: None,
        decrease_violations: 0,
        trace_file: String::new(),
    };
    let (outcome, horizon) = match execute(spec, epsilon, cell_seed(master_seed, seed)) {
        Ok(v) => v,
        Err(e) => {
            result.error = e.to_string();
            return CellRun {
                result,
                trace: None,
            };
        }
    };
    result.horizon = horizon;
    let trace = match outcome {
        Ok(trace) => {
            result.status = CellStatus::Ok;
            trace
        }
        Err(run_err) => {
            result.error = run_err.source.to_string();
            run_err.trace
        }
    };
    result.steps = trace.rows.last().map_or(0, |r| r.t);
    result.total_calls = trace.total_oracle_calls();
    result.calls_to_first_certified = trace.calls_to_first_certified();
    result.sosp_fraction = sosp_fraction(&trace, spec.burn_in).ok();
    result.random_iterate_certified = trace.random_iterate.map(|r| r.certificate.certified);
    result.decrease_violations = trace.decrease_violations;
    CellRun {
        result,
        trace: Some(trace),
    }
}

type Outcome = std::result::Result<RunTrace, sgc_core::RunError>;

fn execute(spec: &ExperimentSpec, epsilon: f64, run_seed: u64) -> Result<(Outcome, usize)> {
    let problem = spec.problem.build()?;
    let x0 = start_point(spec, run_seed)?;
    let meta = schedule_metadata(spec, problem.meta());
    let gap = problem.exact_value(&x0) - meta.f_star;
    let opts = RunOptions {
        certify_every: spec.certify_every,
        epsilon,
        stop_at_first_certified: spec.stop_at_first_certified,
    };
    let c = spec.constants.schedule_constants(epsilon);
    Ok(match spec.algorithm {
        Algorithm::Psgd => {
            let cfg = match spec.mode {
                OracleKind::Derivative => sgc_core::schedule_first_order(&c, &meta, gap)?,
                OracleKind::ZerothOrder => {
                    sgc_core::schedule_zeroth_order(&c, &meta, gap, spec.sgc_arm)?
                }
            };
            (run_psgd(&problem, &x0, &cfg, &opts, run_seed), cfg.t_max)
        }
        Algorithm::Scrn => {
            let zo = spec.mode == OracleKind::ZerothOrder;
            let cfg = scrn_schedule(epsilon, &meta, gap, zo, spec.constants.mu)?
                .to_config(meta.box_radius)?;
            (run_scrn(&problem, &x0, &cfg, &opts, run_seed), cfg.t_max)
        }
    })
}

pub fn trace_file_name(arm: &Arm, epsilon: f64, seed: u64) -> String {
    format!("{arm}_eps{epsilon}_seed{seed}.csv")
}

pub fn write_trace(trace: &RunTrace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    trace
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| HarnessError::io(path, e))
}

/// Runs every (ε, seed) cell of `spec` on a pool of `opts.workers`
/// threads, writing per-cell traces under `traces/`, `cells.csv`,
/// `summary.csv` and `plot.svg` into `spec.out_dir`.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunnerOptions) -> Result<ExperimentOutput> {
    spec.validate()?;
    let out = spec.out_dir.clone();
    let trace_dir = out.join("traces");
    fs::create_dir_all(&trace_dir).map_err(|e| HarnessError::io(&trace_dir, e))?;
    let spec_path = out.join("spec.toml");
    fs::write(&spec_path, spec.to_toml_string()).map_err(|e| HarnessError::io(&spec_path, e))?;

    let jobs: Vec<(f64, u64)> = spec
        .epsilon_grid
        .iter()
        .flat_map(|&e| spec.seeds.iter().map(move |&s| (e, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| HarnessError::Validation(format!("cannot start worker pool: {e}")))?;
    let arm = spec.arm();
    let results: Vec<Result<CellResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(eps, seed)| {
                let CellRun { mut result, trace } = run_cell(spec, eps, seed, opts.master_seed);
                if let (true, Some(trace)) = (spec.write_traces, trace) {
                    let name = trace_file_name(&arm, eps, seed);
                    write_trace(&trace, &trace_dir.join(&name))?;
                    result.trace_file = format!("traces/{name}");
                }
                Ok(result)
            })
            .collect()
    });
    let mut cells = results.into_iter().collect::<Result<Vec<_>>>()?;
    cells.sort_by(|a, b| {
        b.epsilon
            .total_cmp(&a.epsilon)
            .then(a.seed.cmp(&b.seed))
    });
    write_cells(&cells, &out.join("cells.csv"))?;
    let summary = summarize_cells(&cells);
    write_summary(&summary, &out.join("summary.csv"))?;
    if summary.iter().any(|r| r.median_calls_to_first_certified.is_some_and(|m| m > 0)) {
        emit_plot(&summary, &out.join("plot.svg"))?;
    }
    Ok(ExperimentOutput { cells, summary })
}

pub fn write_cells(cells: &[CellResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for c in cells {
        w.serialize(c).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_cells(path: &Path) -> Result<Vec<CellResult>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<CellResult>, _>>()
        .map_err(|e| csv_error(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Parse {
        path: PathBuf::from(path),
        message: e.to_string(),
    }
}
