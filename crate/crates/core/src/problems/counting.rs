use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use super::{Capabilities, ProblemMetadata, StochasticProblem};
use crate::error::{Error, Result};

/// Number of sampled oracle invocations seen by a [`CountingOracle`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleCounts {
    pub value: u64,
    pub grad: u64,
    pub hess: u64,
}

impl OracleCounts {
    pub fn total(&self) -> u64 {
        self.value + self.grad + self.hess
    }
}

/// Wraps a problem and counts every sampled oracle call. Exact oracles are
/// not counted.
#[derive(Debug, Default)]
pub struct CountingOracle<P> {
    inner: P,
    value: AtomicU64,
    grad: AtomicU64,
    hess: AtomicU64,
}

impl<P> CountingOracle<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            value: AtomicU64::new(0),
            grad: AtomicU64::new(0),
            hess: AtomicU64::new(0),
        }
    }

    pub fn counts(&self) -> OracleCounts {
        OracleCounts {
            value: self.value.load(Ordering::Relaxed),
            grad: self.grad.load(Ordering::Relaxed),
            hess: self.hess.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.value.store(0, Ordering::Relaxed);
        self.grad.store(0, Ordering::Relaxed);
        self.hess.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: StochasticProblem> StochasticProblem for CountingOracle<P> {
    fn meta(&self) -> &ProblemMetadata {
        self.inner.meta()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn sample_value(&self, x: &DVector<f64>, seed: u64) -> f64 {
        self.value.fetch_add(1, Ordering::Relaxed);
        self.inner.sample_value(x, seed)
    }

    fn sample_grad(&self, x: &DVector<f64>, seed: u64) -> Result<DVector<f64>> {
        self.grad.fetch_add(1, Ordering::Relaxed);
        self.inner.sample_grad(x, seed)
    }

    fn sample_hess(&self, x: &DVector<f64>, seed: u64) -> Result<DMatrix<f64>> {
        self.hess.fetch_add(1, Ordering::Relaxed);
        self.inner.sample_hess(x, seed)
    }

    fn exact_value(&self, x: &DVector<f64>) -> f64 {
        self.inner.exact_value(x)
    }

    fn exact_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.exact_grad(x)
    }

    fn exact_hess(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.exact_hess(x)
    }
}

/// Exposes only the zeroth-order (value) oracle of the wrapped problem.
#[derive(Debug, Clone)]
pub struct ValueOnly<P>(pub P);

impl<P: StochasticProblem> StochasticProblem for ValueOnly<P> {
    fn meta(&self) -> &ProblemMetadata {
        self.0.meta()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::VALUE_ONLY
    }

    fn sample_value(&self, x: &DVector<f64>, seed: u64) -> f64 {
        self.0.sample_value(x, seed)
    }

    fn sample_grad(&self, _x: &DVector<f64>, _seed: u64) -> Result<DVector<f64>> {
        Err(Error::Capability("gradient"))
    }

    fn sample_hess(&self, _x: &DVector<f64>, _seed: u64) -> Result<DMatrix<f64>> {
        Err(Error::Capability("Hessian"))
    }

    fn exact_value(&self, x: &DVector<f64>) -> f64 {
        self.0.exact_value(x)
    }

    fn exact_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.exact_grad(x)
    }

    fn exact_hess(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.0.exact_hess(x)
    }
}
