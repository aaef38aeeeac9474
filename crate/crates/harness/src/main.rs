use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgc_core::{certify, ParamVector, ProblemConfig};
use sgc_harness::experiment::read_cells;
use sgc_harness::summary::{read_summary, summary_to_csv, write_summary};
use sgc_harness::{emit_plot, run_experiment, summarize_cells, ExperimentSpec, HarnessError, RunnerOptions};

#[derive(Parser)]
#[command(name = "sgc-bench", version, about = "Saddle-escape experiments under strong growth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (epsilon, seed) cell of an experiment spec.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; overrides `out_dir` in the spec.
        #[arg(long, env = "SGC_OUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
    },
    /// Rebuild summary.csv from the cells.csv of a finished run.
    Summarize {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Render a summary CSV as an SVG log-log chart.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify a point against a problem config.
    Certify {
        #[arg(long)]
        problem: PathBuf,
        /// Comma- or newline-separated coordinates.
        #[arg(long)]
        point: PathBuf,
        #[arg(long)]
        epsilon: f64,
    },
}

fn read_point(path: &Path) -> Result<ParamVector, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.into(),
        source: e,
    })?;
    let coords = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| HarnessError::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
    Ok(ParamVector::from_slice(&coords)?)
}

fn execute(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Run {
            spec,
            out,
            workers,
            master_seed,
        } => {
            let mut spec = ExperimentSpec::from_file(&spec)?;
            if let Some(out) = out {
                spec.out_dir = out;
            }
            let output = run_experiment(&spec, &RunnerOptions { workers, master_seed })?;
            print!("{}", summary_to_csv(&output.summary));
        }
        Command::Summarize { dir } => {
            let cells = read_cells(&dir.join("cells.csv"))?;
            let rows = summarize_cells(&cells);
            write_summary(&rows, &dir.join("summary.csv"))?;
            print!("{}", summary_to_csv(&rows));
        }
        Command::Plot { summary, out } => {
            emit_plot(&read_summary(&summary)?, &out)?;
        }
        Command::Certify {
            problem,
            point,
            epsilon,
        } => {
            let text = fs::read_to_string(&problem).map_err(|e| HarnessError::Io {
                path: problem.clone(),
                source: e,
            })?;
            let cfg: ProblemConfig = toml::from_str(&text).map_err(|e| HarnessError::Parse {
                path: problem.clone(),
                message: e.to_string(),
            })?;
            let p = cfg.build()?;
            let x = read_point(&point)?;
            if x.dim() != cfg.dim {
                return Err(HarnessError::Validation(format!(
                    "point has {} coordinates, problem dim is {}",
                    x.dim(),
                    cfg.dim
                )));
            }
            let c = certify(&p, &x, epsilon)?;
            println!("grad_norm={}", c.grad_norm);
            println!("lambda_min={}", c.lambda_min);
            println!("score={}", c.score);
            println!("threshold={}", epsilon.sqrt());
            println!("certified={}", c.certified);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
