//! Experiment sweeps for `sgc-core`: run an arm over an ε grid and a set of
//! seeds, write per-run traces, summarize complexity and plot it.

pub mod error;
pub mod experiment;
pub mod plot;
pub mod spec;
pub mod summary;
pub mod tune;

pub use error::{HarnessError, Result};
pub use experiment::{run_cell, run_experiment, CellResult, CellStatus, ExperimentOutput, RunnerOptions};
pub use plot::{emit_plot, render_svg};
pub use spec::{Algorithm, Arm, ConstantsSpec, ExperimentSpec, OracleKind};
pub use summary::{fit_complexity_slope, fit_log_log, summarize_cells, SlopeFit, SummaryRow};
