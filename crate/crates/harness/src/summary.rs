use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::experiment::{csv_error, CellResult, CellStatus};
use crate::spec::{Algorithm, Arm, OracleKind};

/// Per-(arm, ε) statistics over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub epsilon: f64,
    pub algorithm: Algorithm,
    pub mode: OracleKind,
    pub sgc_arm: bool,
    /// Median over successful runs of the oracle calls spent before the
    /// first certified iterate.
    pub median_calls_to_first_certified: Option<u64>,
    /// Mean certified fraction after burn-in over completed runs.
    pub sosp_fraction: Option<f64>,
    /// Fraction of seeds that reached a certified iterate.
    pub success_rate: f64,
    /// Fraction of seeds whose uniformly drawn iterate was certified.
    pub random_iterate_rate: Option<f64>,
    pub runs: usize,
    pub failed: usize,
}

impl SummaryRow {
    pub fn arm(&self) -> Arm {
        Arm {
            algorithm: self.algorithm,
            mode: self.mode,
            sgc_arm: self.sgc_arm,
        }
    }
}

/// Lower-rounded median.
pub fn median_u64(values: &mut [u64]) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        let (a, b) = (values[n / 2 - 1], values[n / 2]);
        a + (b - a) / 2
    })
}

/// Groups cells by arm and ε. Rows are sorted by arm, then by decreasing ε.
pub fn summarize_cells(cells: &[CellResult]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Arm, u64), Vec<&CellResult>> = BTreeMap::new();
    for c in cells {
        // Negated bit pattern of a positive f64 sorts in decreasing order.
        let key = u64::MAX - c.epsilon.to_bits();
        groups.entry((c.arm(), key)).or_default().push(c);
    }
    groups
        .into_iter()
        .map(|((arm, _), group)| {
            let ok: Vec<_> = group.iter().filter(|c| c.status == CellStatus::Ok).collect();
            let mut hits: Vec<u64> = ok.iter().filter_map(|c| c.calls_to_first_certified).collect();
            let fractions: Vec<f64> = ok.iter().filter_map(|c| c.sosp_fraction).collect();
            let drawn: Vec<bool> = ok.iter().filter_map(|c| c.random_iterate_certified).collect();
            let n = group.len();
            SummaryRow {
                epsilon: group[0].epsilon,
                algorithm: arm.algorithm,
                mode: arm.mode,
                sgc_arm: arm.sgc_arm,
                success_rate: hits.len() as f64 / n as f64,
                median_calls_to_first_certified: median_u64(&mut hits),
                sosp_fraction: (!fractions.is_empty())
                    .then(|| fractions.iter().sum::<f64>() / fractions.len() as f64),
                random_iterate_rate: (!drawn.is_empty())
                    .then(|| drawn.iter().filter(|b| **b).count() as f64 / n as f64),
                runs: n,
                failed: n - ok.len(),
            }
        })
        .collect()
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn summary_from_csv(text: &str) -> std::result::Result<Vec<SummaryRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()
        .map_err(|e| csv_error(path, e))
}

/// Least-squares slope of `log(median calls)` against `log(1/ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub points: usize,
}

/// Fits `log(y) = a + b·log(1/x)` over `(x, y)` pairs.
pub fn fit_log_log(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(HarnessError::InsufficientData(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|(e, _)| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, c)| c.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(HarnessError::InsufficientData("epsilon values are not distinct".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        stderr: (sse / (n - 2.0) / sxx).sqrt(),
        points: xs.len(),
    })
}

/// Slope of the complexity curve of one arm, using rows with a median.
pub fn fit_complexity_slope(summary: &[SummaryRow], arm: &Arm) -> Result<SlopeFit> {
    let points: Vec<(f64, f64)> = summary
        .iter()
        .filter(|r| r.arm() == *arm)
        .filter_map(|r| r.median_calls_to_first_certified.map(|m| (r.epsilon, m as f64)))
        .collect();
    fit_log_log(&points)
}
