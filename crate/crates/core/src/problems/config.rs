use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    make_additive_noise_variant, MultiplicativeSaddle, PhaseRetrieval, StochasticProblem,
    DEFAULT_BOX_RADIUS,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemFamily {
    MultiplicativeSaddle,
    PhaseRetrieval,
}

impl fmt::Display for ProblemFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemFamily::MultiplicativeSaddle => f.write_str("multiplicative_saddle"),
            ProblemFamily::PhaseRetrieval => f.write_str("phase_retrieval"),
        }
    }
}

/// Problem description as read from a key/value config file.
///
/// A positive `sigma` wraps the chosen family in additive Gaussian
/// gradient noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub family: ProblemFamily,
    pub dim: usize,
    #[serde(default = "default_neg_count")]
    pub neg_count: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub planted_seed: u64,
    #[serde(default)]
    pub quartic_coeff: f64,
    #[serde(default = "default_r_box")]
    pub r_box: f64,
}

fn default_neg_count() -> usize {
    1
}

fn default_rho() -> f64 {
    1.0
}

fn default_r_box() -> f64 {
    DEFAULT_BOX_RADIUS
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Box<dyn StochasticProblem>> {
        let base: Box<dyn StochasticProblem> = match self.family {
            ProblemFamily::MultiplicativeSaddle => Box::new(MultiplicativeSaddle::new(
                self.dim,
                self.neg_count,
                self.rho,
                self.quartic_coeff,
                self.r_box,
            )?),
            ProblemFamily::PhaseRetrieval => {
                let m = self.m.ok_or_else(|| {
                    Error::Config("phase_retrieval requires the `m` key".into())
                })?;
                Box::new(PhaseRetrieval::new(self.dim, m, self.planted_seed, self.r_box)?)
            }
        };
        if self.sigma > 0.0 {
            Ok(Box::new(make_additive_noise_variant(base, self.sigma)?))
        } else if self.sigma == 0.0 {
            Ok(base)
        } else {
            Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)))
        }
    }
}
