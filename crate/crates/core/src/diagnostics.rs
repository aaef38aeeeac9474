//! Ground-truth certification, eigenvalues and run traces.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::problems::StochasticProblem;

/// Largest dimension handled by a dense eigendecomposition; larger matrices
/// use Lanczos iteration.
pub const DENSE_EIGEN_LIMIT: usize = 512;

/// Absolute asymmetry tolerated by [`min_eigenvalue`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// ε-second-order stationarity of a point, measured on the exact objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SospCertificate {
    pub grad_norm: f64,
    pub lambda_min: f64,
    pub epsilon: f64,
    /// `max(√‖∇f‖, −λ_min / L_H)`.
    pub score: f64,
    /// `score ≤ √ε`.
    pub certified: bool,
}

impl SospCertificate {
    pub fn from_parts(grad_norm: f64, lambda_min: f64, lipschitz_hess: f64, epsilon: f64) -> Self {
        let score = grad_norm.sqrt().max(-lambda_min / lipschitz_hess);
        Self {
            grad_norm,
            lambda_min,
            epsilon,
            score,
            certified: score <= epsilon.sqrt(),
        }
    }
}

/// Certify `x` against the exact gradient and Hessian of `p`. No sampled
/// oracle is called.
pub fn certify<P: StochasticProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    epsilon: f64,
) -> Result<SospCertificate> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    let l_h = p.meta().lipschitz_hess;
    if !(l_h > 0.0) {
        return Err(Error::Metadata(format!("L_H must be positive, got {l_h}")));
    }
    let grad_norm = p.exact_grad(x).norm();
    let lambda_min = smallest_eigenvalue(p.exact_hess(x))?;
    if !grad_norm.is_finite() {
        return Err(Error::numerical("exact gradient is not finite"));
    }
    Ok(SospCertificate::from_parts(grad_norm, lambda_min, l_h, epsilon))
}

fn check_symmetric(h: &DMatrix<f64>) -> Result<()> {
    if !h.is_square() || h.nrows() == 0 {
        return Err(Error::Input(format!(
            "expected a non-empty square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("matrix has non-finite entries"));
    }
    let d = h.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let gap = (h[(i, j)] - h[(j, i)]).abs();
            if gap > SYMMETRY_TOL {
                return Err(Error::Input(format!(
                    "matrix is not symmetric: |H[{i},{j}] - H[{j},{i}]| = {gap:e}"
                )));
            }
        }
    }
    Ok(())
}

/// Eigenvalue only; skips eigenvector accumulation on the dense path.
fn smallest_eigenvalue(h: DMatrix<f64>) -> Result<f64> {
    check_symmetric(&h)?;
    if h.nrows() <= DENSE_EIGEN_LIMIT {
        Ok(h.symmetric_eigenvalues().min())
    } else {
        Ok(lanczos_min(&h).0)
    }
}

/// Smallest eigenvalue and a unit eigenvector of a symmetric matrix.
///
/// The eigenvector sign is fixed so that its first nonzero coordinate is
/// positive.
pub fn min_eigenvalue(h: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    check_symmetric(h)?;
    let (lambda, mut v) = if h.nrows() <= DENSE_EIGEN_LIMIT {
        let eig = SymmetricEigen::new(h.clone());
        let k = eig.eigenvalues.imin();
        (eig.eigenvalues[k], eig.eigenvectors.column(k).into_owned())
    } else {
        lanczos_min(h)
    };
    v /= v.norm();
    orient(&mut v);
    Ok((lambda, v))
}

pub(crate) fn orient(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().find(|c| **c != 0.0) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

const LANCZOS_BLOCK: usize = 64;
const LANCZOS_RESTARTS: usize = 200;

/// Explicitly restarted Lanczos with full reorthogonalization, started from
/// the normalized all-ones vector.
fn lanczos_min(h: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let d = h.nrows();
    let scale = h.norm().max(f64::MIN_POSITIVE);
    let mut start = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let mut best = (f64::INFINITY, start.clone());
    for _ in 0..LANCZOS_RESTARTS {
        let k = LANCZOS_BLOCK.min(d);
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
        let mut alpha = Vec::with_capacity(k);
        let mut beta: Vec<f64> = Vec::with_capacity(k);
        let mut q = start.clone();
        for j in 0..k {
            basis.push(q.clone());
            let mut w = h * &q;
            let a = q.dot(&w);
            alpha.push(a);
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
            let bnorm = w.norm();
            if j + 1 == k || bnorm <= 1e-14 * scale {
                break;
            }
            beta.push(bnorm);
            q = w / bnorm;
        }
        let m = alpha.len();
        let mut tri = DMatrix::zeros(m, m);
        for i in 0..m {
            tri[(i, i)] = alpha[i];
            if i + 1 < m {
                tri[(i, i + 1)] = beta[i];
                tri[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(tri);
        let idx = eig.eigenvalues.imin();
        let y = eig.eigenvectors.column(idx);
        let mut ritz = DVector::zeros(d);
        for (i, b) in basis.iter().enumerate() {
            ritz.axpy(y[i], b, 1.0);
        }
        ritz /= ritz.norm();
        let lambda = ritz.dot(&(h * &ritz));
        let residual = (h * &ritz - &ritz * lambda).norm();
        best = (lambda, ritz.clone());
        if residual <= 1e-10 * scale {
            break;
        }
        start = ritz;
    }
    best
}

/// Fraction of certified rows after dropping the first
/// `burn_in_fraction` of the rows.
pub fn sosp_fraction(trace: &RunTrace, burn_in_fraction: f64) -> Result<f64> {
    if !(0.0..=0.9).contains(&burn_in_fraction) {
        return Err(Error::Precondition(format!(
            "burn_in_fraction must lie in [0, 0.9], got {burn_in_fraction}"
        )));
    }
    let n = trace.rows.len();
    let skip = (burn_in_fraction * n as f64).floor() as usize;
    let window = &trace.rows[skip.min(n)..];
    if window.is_empty() {
        return Err(Error::Evaluation("no trace rows after burn-in".into()));
    }
    let hits = window.iter().filter(|r| r.certified).count();
    Ok(hits as f64 / window.len() as f64)
}

/// When and how a run certifies its iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Record a row every this many steps (and after the last step).
    pub certify_every: usize,
    /// Target accuracy used for the certified flag.
    pub epsilon: f64,
    /// End the run at the first certified row.
    pub stop_at_first_certified: bool,
}

impl RunOptions {
    pub fn new(epsilon: f64) -> Self {
        Self {
            certify_every: 1,
            epsilon,
            stop_at_first_certified: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.certify_every == 0 {
            return Err(Error::Config("certify_every must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// One certification record. `oracle_calls` is cumulative and excludes the
/// exact oracles used for certification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub lambda_min: f64,
    pub oracle_calls: u64,
    pub certified: bool,
    pub h_norm: Option<f64>,
    pub model_decrease: Option<f64>,
}

/// The iterate after a uniformly drawn step count `step ∈ {1, …, T}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomIterate {
    pub step: usize,
    pub certificate: SospCertificate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    /// `key=value` lines describing the run; written as `#` comments.
    pub config_echo: String,
    pub seed: u64,
    /// Whether rows carry step length and model decrease columns.
    pub cubic_columns: bool,
    pub random_iterate: Option<RandomIterate>,
    /// Steps whose model decrease missed `−(M/12)‖h‖³` (cubic steps only).
    pub decrease_violations: usize,
}

impl RunTrace {
    pub fn new(config_echo: String, seed: u64, cubic_columns: bool) -> Self {
        Self {
            rows: Vec::new(),
            config_echo,
            seed,
            cubic_columns,
            random_iterate: None,
            decrease_violations: 0,
        }
    }

    pub fn total_oracle_calls(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.oracle_calls)
    }

    pub fn first_certified(&self) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.certified)
    }

    /// Cumulative oracle calls at the first certified row.
    pub fn calls_to_first_certified(&self) -> Option<u64> {
        self.first_certified().map(|r| r.oracle_calls)
    }

    pub fn write_header<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for line in self.config_echo.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# seed={}", self.seed)?;
        if self.cubic_columns {
            writeln!(w, "t,f,grad_norm,lambda_min,oracle_calls,certified,h_norm,model_decrease")
        } else {
            writeln!(w, "t,f,grad_norm,lambda_min,oracle_calls,certified")
        }
    }

    pub fn write_row<W: Write>(&self, w: &mut W, row: &TraceRow) -> io::Result<()> {
        write!(
            w,
            "{},{},{},{},{},{}",
            row.t,
            row.f,
            row.grad_norm,
            row.lambda_min,
            row.oracle_calls,
            u8::from(row.certified)
        )?;
        if self.cubic_columns {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            write!(w, ",{},{}", opt(row.h_norm), opt(row.model_decrease))?;
        }
        writeln!(w)
    }

    /// Full CSV: echo comments, column header, one line per row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        self.write_header(&mut w)?;
        for row in &self.rows {
            self.write_row(&mut w, row)?;
        }
        if let Some(r) = &self.random_iterate {
            writeln!(
                w,
                "# random_iterate step={} score={} certified={}",
                r.step,
                r.certificate.score,
                u8::from(r.certificate.certified)
            )?;
        }
        Ok(())
    }
}
