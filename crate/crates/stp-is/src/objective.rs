//! Black-box objective abstraction.
//!
//! The optimizer only ever sees `Objective::evaluate` and
//! `Objective::coordinate_probe`; the analytic gradient, when a problem
//! exposes one, feeds the `grad_l1` diagnostic column of traces and is
//! never consulted for steps.

use crate::numerics::{DenseMatrix, DenseVector};
use crate::rng::SeededRng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("dimension mismatch: objective has dim {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate index {index} out of range for dim {dim}")]
    BadCoordinate { index: usize, dim: usize },
    #[error("transform must be {dim}x{dim}, got {rows}x{cols}")]
    BadTransform {
        dim: usize,
        rows: usize,
        cols: usize,
    },
}

/// Per-coordinate Lipschitz constants of the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateSmoothness {
    l: DenseVector,
    clamped: usize,
}

/// Floor applied to non-positive constants; p_i and 1/v_i divide by them.
pub const L_FLOOR: f64 = 1e-12;

impl CoordinateSmoothness {
    pub fn new(l: DenseVector) -> Self {
        let mut clamped = 0;
        let l = l
            .into_iter()
            .map(|v| {
                if v < L_FLOOR {
                    clamped += 1;
                    L_FLOOR
                } else {
                    v
                }
            })
            .collect();
        Self { l, clamped }
    }

    pub fn constants(&self) -> &[f64] {
        &self.l
    }

    pub fn max(&self) -> f64 {
        self.l.iter().fold(f64::MIN, |m, &v| m.max(v))
    }

    pub fn sum(&self) -> f64 {
        self.l.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.l.len()
    }

    /// Number of entries raised to the floor at construction.
    pub fn clamped_count(&self) -> usize {
        self.clamped
    }
}

/// A function the optimizer can query. `eval` takes `&mut self` so
/// stochastic functions can own their noise source.
pub trait Function {
    fn dim(&self) -> usize;
    fn eval(&mut self, x: &[f64]) -> f64;
    /// Analytic gradient, diagnostics only.
    fn gradient(&self, _x: &[f64]) -> Option<DenseVector> {
        None
    }
    /// Base evaluations consumed per `eval` call.
    fn evals_per_call(&self) -> u64 {
        1
    }
}

/// A function handle plus evaluation counting and problem metadata.
pub struct Objective {
    f: Box<dyn Function + Send>,
    f_star: Option<f64>,
    smoothness: Option<CoordinateSmoothness>,
    level_radius: Option<f64>,
    evals: u64,
}

impl Objective {
    pub fn new(f: Box<dyn Function + Send>) -> Self {
        Self {
            f,
            f_star: None,
            smoothness: None,
            level_radius: None,
            evals: 0,
        }
    }

    pub fn with_f_star(mut self, f_star: f64) -> Self {
        self.f_star = Some(f_star);
        self
    }

    pub fn with_smoothness(mut self, s: CoordinateSmoothness) -> Self {
        self.smoothness = Some(s);
        self
    }

    pub fn with_level_radius(mut self, r: f64) -> Self {
        self.level_radius = Some(r);
        self
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn f_star(&self) -> Option<f64> {
        self.f_star
    }

    pub fn smoothness(&self) -> Option<&CoordinateSmoothness> {
        self.smoothness.as_ref()
    }

    pub fn level_radius(&self) -> Option<f64> {
        self.level_radius
    }

    pub fn eval_count(&self) -> u64 {
        self.evals
    }

    pub fn evaluate(&mut self, x: &[f64]) -> Result<f64, ObjectiveError> {
        if x.len() != self.f.dim() {
            return Err(ObjectiveError::DimensionMismatch {
                expected: self.f.dim(),
                got: x.len(),
            });
        }
        self.evals += self.f.evals_per_call();
        Ok(self.f.eval(x))
    }

    /// f(x + t e_i); exactly one evaluation, x untouched.
    pub fn coordinate_probe(&mut self, x: &[f64], i: usize, t: f64) -> Result<f64, ObjectiveError> {
        if i >= self.f.dim() {
            return Err(ObjectiveError::BadCoordinate {
                index: i,
                dim: self.f.dim(),
            });
        }
        let mut probe = x.to_vec();
        probe[i] += t;
        self.evaluate(&probe)
    }

    pub fn gradient(&self, x: &[f64]) -> Option<DenseVector> {
        self.f.gradient(x)
    }
}

/// f_B(y) = f(B y): coordinate moves in y are moves along the columns of B
/// in the original space.
pub struct TransformedObjective<F: Function> {
    base: F,
    b: DenseMatrix,
}

impl<F: Function> TransformedObjective<F> {
    pub fn new(base: F, b: DenseMatrix) -> Result<Self, ObjectiveError> {
        let n = base.dim();
        if b.rows() != n || b.cols() != n {
            return Err(ObjectiveError::BadTransform {
                dim: n,
                rows: b.rows(),
                cols: b.cols(),
            });
        }
        Ok(Self { base, b })
    }
}

impl<F: Function> Function for TransformedObjective<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&mut self, y: &[f64]) -> f64 {
        let x = self.b.matvec(y).expect("dim checked at construction");
        self.base.eval(&x)
    }

    fn gradient(&self, y: &[f64]) -> Option<DenseVector> {
        // ∇f_B(y) = Bᵀ ∇f(By)
        let x = self.b.matvec(y).ok()?;
        let g = self.base.gradient(&x)?;
        let n = self.base.dim();
        let mut out = vec![0.0; n];
        for r in 0..n {
            for c in 0..n {
                out[c] += self.b[(r, c)] * g[r];
            }
        }
        Some(out)
    }

    fn evals_per_call(&self) -> u64 {
        self.base.evals_per_call()
    }
}

/// Mean of K independent evaluations of a stochastic base; the counter
/// advances by K per call.
pub struct AveragedObjective<F: Function> {
    base: F,
    repeats: u64,
}

impl<F: Function> AveragedObjective<F> {
    pub fn new(base: F, repeats: u64) -> Self {
        assert!(repeats >= 1, "repeats must be positive");
        Self { base, repeats }
    }
}

impl<F: Function> Function for AveragedObjective<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        let sum: f64 = (0..self.repeats).map(|_| self.base.eval(x)).sum();
        sum / self.repeats as f64
    }

    fn evals_per_call(&self) -> u64 {
        self.repeats * self.base.evals_per_call()
    }
}

/// Deterministic function plus additive Gaussian noise from a child rng
/// split off the run seed.
pub struct NoisyFunction<F: Function> {
    base: F,
    sigma: f64,
    rng: SeededRng,
}

impl<F: Function> NoisyFunction<F> {
    pub fn new(base: F, sigma: f64, rng: SeededRng) -> Self {
        Self { base, sigma, rng }
    }
}

impl<F: Function> Function for NoisyFunction<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        self.base.eval(x) + self.sigma * self.rng.gaussian()
    }

    fn evals_per_call(&self) -> u64 {
        self.base.evals_per_call()
    }
}

/// Closure-backed function for tests and toy runs.
pub struct FnObjective<G> {
    dim: usize,
    g: G,
}

impl<G: FnMut(&[f64]) -> f64> FnObjective<G> {
    pub fn new(dim: usize, g: G) -> Self {
        Self { dim, g }
    }
}

impl<G: FnMut(&[f64]) -> f64> Function for FnObjective<G> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        (self.g)(x)
    }
}

/// Central finite-difference gradient check used by the diagnostics tests.
pub fn finite_difference_gradient<F: Function>(f: &mut F, x: &[f64], h: f64) -> DenseVector {
    let n = f.dim();
    let mut g = vec![0.0; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + h;
        let fp = f.eval(&xp);
        xp[i] = x[i] - h;
        let fm = f.eval(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}
