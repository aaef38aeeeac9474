use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_dim, ProblemMetadata, StochasticProblem, DEFAULT_BOX_RADIUS};
use crate::error::{Error, Result};
use crate::rng::{standard_normal_vector, unit_uniform};

/// Largest number of samples for which exact expectations are enumerated.
pub const MAX_FINITE_SUM: usize = 10_000;

/// Realizable phase retrieval as a finite sum.
///
/// `F(x, i) = ¼ (b_i − (a_iᵀx)²)²` with `b_i = (a_iᵀx*)²` for a planted unit
/// vector `x*`, and `i` uniform over the `m` samples. Every sample is
/// minimized at `±x*`, so all sample gradients vanish there.
#[derive(Debug, Clone)]
pub struct PhaseRetrieval {
    sensing: Vec<DVector<f64>>,
    targets: Vec<f64>,
    planted: DVector<f64>,
    meta: ProblemMetadata,
}

pub fn make_phase_retrieval(d: usize, m: usize, planted_seed: u64) -> Result<PhaseRetrieval> {
    PhaseRetrieval::new(d, m, planted_seed, DEFAULT_BOX_RADIUS)
}

impl PhaseRetrieval {
    pub fn new(d: usize, m: usize, planted_seed: u64, box_radius: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("dim must be >= 1".into()));
        }
        if m < d {
            return Err(Error::Config(format!("phase retrieval needs m >= d, got m={m}, d={d}")));
        }
        if m > MAX_FINITE_SUM {
            return Err(Error::Config(format!(
                "m={m} exceeds the enumeration limit {MAX_FINITE_SUM}"
            )));
        }
        if !(box_radius > 0.0) || !box_radius.is_finite() {
            return Err(Error::Config(format!("r_box must be positive, got {box_radius}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(planted_seed);
        let mut planted = standard_normal_vector(&mut rng, d);
        planted /= planted.norm();
        let sensing: Vec<DVector<f64>> = (0..m).map(|_| standard_normal_vector(&mut rng, d)).collect();
        let targets = sensing.iter().map(|a| a.dot(&planted).powi(2)).collect();
        let mut problem = Self {
            sensing,
            targets,
            planted,
            meta: ProblemMetadata {
                dim: d,
                lipschitz_value: 0.0,
                lipschitz_grad: 0.0,
                lipschitz_hess: 0.0,
                f_star: 0.0,
                rho_true: None,
                sigma2: 0.0,
                grad_sigma: None,
                box_radius,
            },
        };
        problem.fill_bounds();
        problem.meta.validate()?;
        Ok(problem)
    }

    fn fill_bounds(&mut self) {
        let r = self.meta.box_radius;
        let m = self.sensing.len() as f64;
        let (mut l_max, mut lg, mut lh, mut hess_max, mut grad_sq) = (0.0f64, 0.0, 0.0, 0.0f64, 0.0);
        for (a, b) in self.sensing.iter().zip(&self.targets) {
            let a2 = a.norm_squared();
            let z_max = a2.sqrt() * r;
            let grad_bound = z_max * (b + z_max * z_max) * a2.sqrt();
            let hess_bound = (3.0 * z_max * z_max + b) * a2;
            l_max = l_max.max(grad_bound);
            lg += hess_bound;
            lh += 6.0 * r * a2 * a2;
            hess_max = hess_max.max(hess_bound);
            grad_sq += grad_bound * grad_bound;
        }
        self.meta.lipschitz_value = l_max;
        self.meta.lipschitz_grad = lg / m;
        self.meta.lipschitz_hess = lh / m;
        self.meta.sigma2 = 2.0 * hess_max;
        self.meta.grad_sigma = Some((grad_sq / m).sqrt());
    }

    /// The planted signal `x*`.
    pub fn planted(&self) -> &DVector<f64> {
        &self.planted
    }

    pub fn num_samples(&self) -> usize {
        self.sensing.len()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Sample index for a seed, uniform over `0..m`.
    pub fn index(&self, seed: u64) -> usize {
        let m = self.sensing.len();
        ((unit_uniform(seed) * m as f64) as usize).min(m - 1)
    }

    /// `F(x, i)` for an explicit sample index.
    pub fn component_value(&self, x: &DVector<f64>, i: usize) -> f64 {
        let z = self.sensing[i].dot(x);
        0.25 * (self.targets[i] - z * z).powi(2)
    }

    /// `∇F(x, i)` for an explicit sample index.
    pub fn component_grad(&self, x: &DVector<f64>, i: usize) -> DVector<f64> {
        let a = &self.sensing[i];
        let z = a.dot(x);
        a * (-z * (self.targets[i] - z * z))
    }

    /// `∇²F(x, i)` for an explicit sample index.
    pub fn component_hess(&self, x: &DVector<f64>, i: usize) -> DMatrix<f64> {
        let a = &self.sensing[i];
        let z = a.dot(x);
        (a * a.transpose()) * (3.0 * z * z - self.targets[i])
    }
}

impl StochasticProblem for PhaseRetrieval {
    fn meta(&self) -> &ProblemMetadata {
        &self.meta
    }

    fn sample_value(&self, x: &DVector<f64>, seed: u64) -> f64 {
        check_dim(self.meta.dim, x);
        self.component_value(x, self.index(seed))
    }

    fn sample_grad(&self, x: &DVector<f64>, seed: u64) -> Result<DVector<f64>> {
        check_dim(self.meta.dim, x);
        Ok(self.component_grad(x, self.index(seed)))
    }

    fn sample_hess(&self, x: &DVector<f64>, seed: u64) -> Result<DMatrix<f64>> {
        check_dim(self.meta.dim, x);
        Ok(self.component_hess(x, self.index(seed)))
    }

    fn exact_value(&self, x: &DVector<f64>) -> f64 {
        check_dim(self.meta.dim, x);
        let m = self.sensing.len();
        (0..m).map(|i| self.component_value(x, i)).sum::<f64>() / m as f64
    }

    fn exact_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        check_dim(self.meta.dim, x);
        let m = self.sensing.len();
        let mut g = DVector::zeros(self.meta.dim);
        for i in 0..m {
            g += self.component_grad(x, i);
        }
        g / m as f64
    }

    fn exact_hess(&self, x: &DVector<f64>) -> DMatrix<f64> {
        check_dim(self.meta.dim, x);
        let m = self.sensing.len();
        let d = self.meta.dim;
        let mut h = DMatrix::zeros(d, d);
        for i in 0..m {
            h += self.component_hess(x, i);
        }
        h / m as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_underdetermined() {
        assert!(matches!(make_phase_retrieval(5, 4, 0), Err(Error::Config(_))));
        assert!(make_phase_retrieval(5, MAX_FINITE_SUM + 1, 0).is_err());
    }

    #[test]
    fn interpolation_at_planted_signal() {
        let p = make_phase_retrieval(4, 30, 11).unwrap();
        let xs = p.planted().clone();
        for seed in 0..200 {
            assert_eq!(p.sample_grad(&xs, seed).unwrap().norm(), 0.0);
            assert_eq!(p.sample_grad(&-&xs, seed).unwrap().norm(), 0.0);
        }
        assert_eq!(p.exact_value(&xs), 0.0);
    }

    #[test]
    fn value_at_origin_closed_form() {
        let p = make_phase_retrieval(3, 25, 5).unwrap();
        let expected = p.targets().iter().map(|b| b * b).sum::<f64>() / (4.0 * 25.0);
        let got = p.exact_value(&DVector::zeros(3));
        assert!((got - expected).abs() <= 1e-14 * expected.max(1.0));
    }

    #[test]
    fn same_planted_seed_same_instance() {
        let a = make_phase_retrieval(3, 10, 42).unwrap();
        let b = make_phase_retrieval(3, 10, 42).unwrap();
        assert_eq!(a.planted(), b.planted());
        assert_eq!(a.targets(), b.targets());
    }
}
