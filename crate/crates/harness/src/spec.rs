use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgc_core::{ProblemConfig, ScheduleConstants};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Psgd,
    Scrn,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Psgd => "psgd",
            Algorithm::Scrn => "scrn",
        })
    }
}

/// Oracle access of an arm. `first_order` and `higher_order` both mean
/// sampled derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[serde(alias = "first_order", alias = "higher_order")]
    Derivative,
    ZerothOrder,
}

impl OracleKind {
    /// Conventional name for the mode of a given algorithm.
    pub fn label(&self, algorithm: Algorithm) -> &'static str {
        match (self, algorithm) {
            (OracleKind::ZerothOrder, _) => "zeroth_order",
            (OracleKind::Derivative, Algorithm::Psgd) => "first_order",
            (OracleKind::Derivative, Algorithm::Scrn) => "higher_order",
        }
    }
}

/// Schedule constants as written in a spec file; omitted keys default to 1
/// (`delta` to 0.1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsSpec {
    pub a0: f64,
    pub a1: f64,
    pub c: f64,
    pub kappa: [f64; 10],
    pub delta: f64,
    pub mu: [f64; 5],
}

impl Default for ConstantsSpec {
    fn default() -> Self {
        Self {
            a0: 1.0,
            a1: 1.0,
            c: 1.0,
            kappa: [1.0; 10],
            delta: 0.1,
            mu: [1.0; 5],
        }
    }
}

impl ConstantsSpec {
    pub fn schedule_constants(&self, epsilon: f64) -> ScheduleConstants {
        ScheduleConstants {
            a0: self.a0,
            a1: self.a1,
            c: self.c,
            kappa: self.kappa,
            delta: self.delta,
            epsilon,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("sgc-out")
}

fn default_certify_every() -> usize {
    1
}

fn default_start_radius() -> f64 {
    1e-3
}

fn default_burn_in() -> f64 {
    0.2
}

fn default_true() -> bool {
    true
}

/// One experiment: an arm (algorithm, oracle mode, noise model) swept over
/// an ε grid and a set of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemConfig,
    pub algorithm: Algorithm,
    pub mode: OracleKind,
    /// Use the strong-growth schedules. Must be false for problems with
    /// additive noise.
    pub sgc_arm: bool,
    /// Strictly decreasing target accuracies.
    pub epsilon_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub constants: ConstantsSpec,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_certify_every")]
    pub certify_every: usize,
    #[serde(default)]
    pub stop_at_first_certified: bool,
    /// Distance of the random start from the origin.
    #[serde(default = "default_start_radius")]
    pub start_radius: f64,
    /// Explicit start point; overrides `start_radius`.
    #[serde(default)]
    pub start_point: Option<Vec<f64>>,
    /// Leading fraction of rows excluded from the certified fraction.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_true")]
    pub write_traces: bool,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| HarnessError::Validation(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let spec: Self = toml::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Validation(m));
        if self.epsilon_grid.is_empty() {
            return bad("epsilon_grid is empty".into());
        }
        if self.epsilon_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad("every epsilon must lie in (0, 1)".into());
        }
        if self.epsilon_grid.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilon_grid must be strictly decreasing".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds is empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.certify_every == 0 {
            return bad("certify_every must be >= 1".into());
        }
        if !(0.0..=0.9).contains(&self.burn_in) {
            return bad(format!("burn_in must lie in [0, 0.9], got {}", self.burn_in));
        }
        if self.sgc_arm && self.problem.sigma > 0.0 {
            return bad("sgc_arm = true is inconsistent with additive noise (sigma > 0)".into());
        }
        match &self.start_point {
            Some(p) if p.len() != self.problem.dim => {
                return bad(format!(
                    "start_point has {} coordinates, problem dim is {}",
                    p.len(),
                    self.problem.dim
                ))
            }
            None if !(self.start_radius >= 0.0) => {
                return bad("start_radius must be >= 0".into())
            }
            _ => {}
        }
        Ok(())
    }

    pub fn arm(&self) -> Arm {
        Arm {
            algorithm: self.algorithm,
            mode: self.mode,
            sgc_arm: self.sgc_arm,
        }
    }
}

/// Algorithm, oracle mode and noise model; the unit summaries are grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arm {
    pub algorithm: Algorithm,
    pub mode: OracleKind,
    pub sgc_arm: bool,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}",
            self.algorithm,
            self.mode.label(self.algorithm),
            if self.sgc_arm { "sgc" } else { "nosgc" }
        )
    }
}
