//! Benchmark objectives with exact per-coordinate smoothness constants.
//!
//! Ridge:       f(x) = (1/2m)‖Ax − y‖² + (λ/2)‖x‖²,  L_i = (1/m)‖A(:,i)‖² + λ
//! Squared SVM: f(x) = ½ Σ max(0, 1 − y_i a_iᵀx)² + (λ/2)‖x‖²,  L_i = ‖A(:,i)‖² + λ

use crate::numerics::{DenseMatrix, DenseVector,NumericsError, SparseMatrix};
use crate::objective::{CoordinateSmoothness, Function};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("label at row {0} is {1}, expected -1 or +1")]
    InvalidLabel(usize, f64),
    #[error("exact solver limited to n <= {limit}, problem has n = {n}")]
    TooLargeForExactSolve { n: usize, limit: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

const EXACT_SOLVE_LIMIT: usize = 10_000;

#[derive(Debug, Clone)]
pub struct RidgeProblem {
    a: SparseMatrix,
    y: DenseVector,
    lambda: f64,
    col_sq_norms: DenseVector,
}

impl RidgeProblem {
    pub fn new(a: SparseMatrix, y: DenseVector, lambda: f64) -> Result<Self, ProblemError> {
        if y.len() != a.rows() {
            return Err(ProblemError::Dimension(format!(
                "A has {} rows, y has {} entries",
                a.rows(),
                y.len()
            )));
        }
        let col_sq_norms = a.column_sq_norms();
        Ok(Self {
            a,
            y,
            lambda,
            col_sq_norms,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let m = self.a.rows() as f64;
        let res_sq: f64 = (0..self.a.rows())
            .map(|r| {
                let d = self.a.row_dot(r, x) - self.y[r];
                d * d
            })
            .sum();
        let reg: f64 = x.iter().map(|v| v * v).sum();
        res_sq / (2.0 * m) + self.lambda / 2.0 * reg
    }

    /// (1/m) Aᵀ(Ax − y) + λx.
    pub fn grad(&self, x: &[f64]) -> DenseVector {
        let m = self.a.rows() as f64;
        let res: Vec<f64> = (0..self.a.rows())
            .map(|r| self.a.row_dot(r, x) - self.y[r])
            .collect();
        let mut g = self.a.matvec_transpose(&res).expect("dims fixed");
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi = *gi / m + self.lambda * xi;
        }
        g
    }

    /// L_i = (1/m)‖A(:,i)‖² + λ.
    pub fn exact_smoothness(&self) -> CoordinateSmoothness {
        let m = self.a.rows() as f64;
        CoordinateSmoothness::new(
            self.col_sq_norms
                .iter()
                .map(|c| c / m + self.lambda)
                .collect(),
        )
    }

    /// Solves ((1/m)AᵀA + λI) x = (1/m)Aᵀy by dense Cholesky.
    pub fn exact_solve(&self) -> Result<(DenseVector, f64), ProblemError> {
        let n = self.a.cols();
        if n > EXACT_SOLVE_LIMIT {
            return Err(ProblemError::TooLargeForExactSolve {
                n,
                limit: EXACT_SOLVE_LIMIT,
            });
        }
        let m = self.a.rows() as f64;
        let mut normal = DenseMatrix::zeros(n, n);
        // AᵀA accumulated row by row of A
        for r in 0..self.a.rows() {
            let entries: Vec<(usize, f64)> = self.a.row(r).collect();
            for &(ci, vi) in &entries {
                for &(cj, vj) in &entries {
                    normal[(ci, cj)] += vi * vj / m;
                }
            }
        }
        for i in 0..n {
            normal[(i, i)] += self.lambda;
        }
        let mut rhs = self.a.matvec_transpose(&self.y)?;
        for v in rhs.iter_mut() {
            *v /= m;
        }
        let x_star = normal.cholesky_solve(&rhs)?;
        let f_star = self.eval(&x_star);
        Ok((x_star, f_star))
    }

    /// Conservative level-set radius at x0: ‖x0 − x*‖∞ + √(2(f(x0) − f*)/λ).
    pub fn level_radius(&self, x0: &[f64]) -> Result<f64, ProblemError> {
        let (x_star, f_star) = self.exact_solve()?;
        let dist = x0
            .iter()
            .zip(&x_star)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let gap = (self.eval(x0) - f_star).max(0.0);
        Ok(dist + (2.0 * gap / self.lambda).sqrt())
    }
}

impl Function for RidgeProblem {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        RidgeProblem::eval(self, x)
    }

    fn gradient(&self, x: &[f64]) -> Option<DenseVector> {
        Some(self.grad(x))
    }
}

#[derive(Debug, Clone)]
pub struct SquaredSvmProblem {
    a: SparseMatrix,
    labels: DenseVector,
    lambda: f64,
    col_sq_norms: DenseVector,
}

impl SquaredSvmProblem {
    pub fn new(a: SparseMatrix, labels: DenseVector, lambda: f64) -> Result<Self, ProblemError> {
        if labels.len() != a.rows() {
            return Err(ProblemError::Dimension(format!(
                "A has {} rows, labels has {} entries",
                a.rows(),
                labels.len()
            )));
        }
        if let Some((r, &l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l != 1.0 && l != -1.0)
        {
            return Err(ProblemError::InvalidLabel(r, l));
        }
        let col_sq_norms = a.column_sq_norms();
        Ok(Self {
            a,
            labels,
            lambda,
            col_sq_norms,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let hinge_sq: f64 = (0..self.a.rows())
            .map(|r| {
                let margin = 1.0 - self.labels[r] * self.a.row_dot(r, x);
                let h = margin.max(0.0);
                h * h
            })
            .sum();
        let reg: f64 = x.iter().map(|v| v * v).sum();
        0.5 * hinge_sq + self.lambda / 2.0 * reg
    }

    /// The squared hinge is C¹: ∇f = −Σ_{margin>0} (1 − y_r a_rᵀx) y_r a_r + λx.
    pub fn grad(&self, x: &[f64]) -> DenseVector {
        let mut g: Vec<f64> = x.iter().map(|xi| self.lambda * xi).collect();
        for r in 0..self.a.rows() {
            let margin = 1.0 - self.labels[r] * self.a.row_dot(r, x);
            if margin > 0.0 {
                let coeff = -margin * self.labels[r];
                for (c, v) in self.a.row(r) {
                    g[c] += coeff * v;
                }
            }
        }
        g
    }

    /// L_i = ‖A(:,i)‖² + λ.
    pub fn exact_smoothness(&self) -> CoordinateSmoothness {
        CoordinateSmoothness::new(
            self.col_sq_norms
                .iter()
                .map(|c| c + self.lambda)
                .collect(),
        )
    }
}

impl Function for SquaredSvmProblem {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        SquaredSvmProblem::eval(self, x)
    }

    fn gradient(&self, x: &[f64]) -> Option<DenseVector> {
        Some(self.grad(x))
    }
}

/// Reproducible synthetic ridge instance: Gaussian A and y, columns
/// rescaled so ‖A(:,1)‖ = 1 and ‖A(:,i)‖ = 1/m for i ≥ 2, λ = 1/m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<RidgeProblem, ProblemError> {
    let SyntheticSpec { m, n, seed } = *spec;
    assert!(m >= 1 && n >= 1);
    let mut rng = SeededRng::new(seed);
    let data: Vec<f64> = (0..m * n).map(|_| rng.gaussian()).collect();
    let y: Vec<f64> = (0..m).map(|_| rng.gaussian()).collect();
    let a = SparseMatrix::from_dense(m, n, &data)?;
    let mut targets = vec![1.0 / m as f64; n];
    targets[0] = 1.0;
    let (a, _zero_cols) = a.normalize_columns(&targets)?;
    RidgeProblem::new(a, y, 1.0 / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linf_norm;
    use crate::objective::finite_difference_gradient;

    pub(crate) fn ridge_toy() -> RidgeProblem {
        let a = SparseMatrix::from_dense(2, 2, &[1.0, 0.0, 0.0, 2.0]).unwrap();
        RidgeProblem::new(a, vec![1.0, 1.0], 0.5).unwrap()
    }

    #[test]
    fn ridge_eval_hand_cases() {
        let p = ridge_toy();
        assert!((p.eval(&[0.0, 0.0]) - 0.5).abs() < 1e-15);
        let zero_targets =
            RidgeProblem::new(p.matrix().clone(), vec![0.0, 0.0], 0.5).unwrap();
        assert_eq!(zero_targets.eval(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn ridge_gradient_vanishes_at_solution() {
        let p = ridge_toy();
        let (x_star, _) = p.exact_solve().unwrap();
        assert!(linf_norm(&p.grad(&x_star)) <= 1e-8);
    }

    #[test]
    fn ridge_exact_solve_1d() {
        let a = SparseMatrix::from_dense(1, 1, &[1.0]).unwrap();
        let p = RidgeProblem::new(a, vec![1.0], 1.0).unwrap();
        let (x, f) = p.exact_solve().unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15);
        assert!((f - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ridge_exact_solve_zero_targets() {
        let a = SparseMatrix::from_dense(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = RidgeProblem::new(a, vec![0.0, 0.0], 0.1).unwrap();
        let (x, f) = p.exact_solve().unwrap();
        assert!(linf_norm(&x) < 1e-14);
        assert!(f.abs() < 1e-14);
    }

    #[test]
    fn ridge_exact_solve_residual() {
        let spec = SyntheticSpec { m: 50, n: 10, seed: 3 };
        let mut rng = SeededRng::new(spec.seed);
        let data: Vec<f64> = (0..500).map(|_| rng.gaussian()).collect();
        let a = SparseMatrix::from_dense(50, 10, &data).unwrap();
        let y: Vec<f64> = (0..50).map(|_| rng.gaussian()).collect();
        let p = RidgeProblem::new(a.clone(), y.clone(), 0.3).unwrap();
        let (x, _) = p.exact_solve().unwrap();
        // residual of the normal equations
        let m = 50.0;
        let ax = a.matvec(&x).unwrap();
        let mut lhs = a.matvec_transpose(&ax).unwrap();
        let aty = a.matvec_transpose(&y).unwrap();
        for i in 0..10 {
            lhs[i] = lhs[i] / m + 0.3 * x[i] - aty[i] / m;
        }
        assert!(linf_norm(&lhs) <= 1e-10);
    }

    #[test]
    fn exact_solve_minimizes() {
        let p = generate_synthetic(&SyntheticSpec { m: 40, n: 6, seed: 8 }).unwrap();
        let (x_star, f_star) = p.exact_solve().unwrap();
        let mut rng = SeededRng::new(99);
        for _ in 0..100 {
            let mut delta: Vec<f64> = (0..6).map(|_| rng.gaussian()).collect();
            let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            for d in delta.iter_mut() {
                *d *= 1e-3 / norm;
            }
            let x: Vec<f64> = x_star.iter().zip(&delta).map(|(a, b)| a + b).collect();
            assert!(p.eval(&x) >= f_star);
        }
    }

    #[test]
    fn smoothness_hand_cases() {
        let p = ridge_toy();
        assert_eq!(p.exact_smoothness().constants(), &[1.0, 2.5]);

        let zero = SparseMatrix::from_triplets(2, 3, []).unwrap();
        let p = RidgeProblem::new(zero.clone(), vec![0.0, 0.0], 0.7).unwrap();
        assert_eq!(p.exact_smoothness().constants(), &[0.7, 0.7, 0.7]);

        let a = SparseMatrix::from_dense(2, 2, &[1.0, 0.0, 0.0, 2.0]).unwrap();
        let svm = SquaredSvmProblem::new(a, vec![1.0, -1.0], 0.5).unwrap();
        assert_eq!(svm.exact_smoothness().constants(), &[1.5, 4.5]);
    }

    #[test]
    fn ridge_is_coordinate_quadratic_with_exact_li() {
        let p = generate_synthetic(&SyntheticSpec { m: 30, n: 5, seed: 4 }).unwrap();
        let l = p.exact_smoothness();
        let mut rng = SeededRng::new(17);
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| rng.gaussian()).collect();
            let i = (rng.uniform01() * 5.0) as usize;
            let t = rng.gaussian();
            let mut xt = x.clone();
            xt[i] += t;
            let lhs = p.eval(&xt) - p.eval(&x) - t * p.grad(&x)[i];
            let rhs = 0.5 * l.constants()[i] * t * t;
            // lhs suffers catastrophic cancellation at the scale of f,
            // so allow a few ulps of f on top of the relative tolerance
            let tol = 1e-9 * rhs.abs() + 1e-12 * p.eval(&x).abs().max(1.0);
            assert!((lhs - rhs).abs() <= tol, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn svm_descent_bound_holds() {
        let mut rng = SeededRng::new(21);
        let data: Vec<f64> = (0..100).map(|_| rng.gaussian()).collect();
        let a = SparseMatrix::from_dense(20, 5, &data).unwrap();
        let labels: Vec<f64> = (0..20)
            .map(|_| if rng.uniform01() < 0.5 { 1.0 } else { -1.0 })
            .collect();
        let p = SquaredSvmProblem::new(a, labels, 0.2).unwrap();
        let l = p.exact_smoothness();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..5).map(|_| rng.gaussian()).collect();
            let i = (rng.uniform01() * 5.0) as usize;
            let t = rng.gaussian();
            let mut xt = x.clone();
            xt[i] += t;
            let bound = p.eval(&x) + t * p.grad(&x)[i] + 0.5 * l.constants()[i] * t * t;
            assert!(p.eval(&xt) <= bound + 1e-10 * bound.abs());
        }
    }

    #[test]
    fn svm_hand_cases_and_label_check() {
        let a = SparseMatrix::from_dense(1, 1, &[1.0]).unwrap();
        let p = SquaredSvmProblem::new(a.clone(), vec![1.0], 0.0).unwrap();
        assert_eq!(p.eval(&[2.0]), 0.0);
        assert_eq!(p.eval(&[0.0]), 0.5);
        assert!(SquaredSvmProblem::new(a, vec![2.0], 0.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SeededRng::new(31);
        let ridge = generate_synthetic(&SyntheticSpec { m: 25, n: 4, seed: 12 }).unwrap();
        let data: Vec<f64> = (0..80).map(|_| rng.gaussian()).collect();
        let a = SparseMatrix::from_dense(20, 4, &data).unwrap();
        let labels: Vec<f64> = (0..20)
            .map(|_| if rng.uniform01() < 0.5 { 1.0 } else { -1.0 })
            .collect();
        let svm = SquaredSvmProblem::new(a, labels, 0.15).unwrap();
        let mut ridge_fd = ridge.clone();
        let mut svm_fd = svm.clone();
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.gaussian()).collect();
            let pairs = [
                (ridge.grad(&x), finite_difference_gradient(&mut ridge_fd, &x, 1e-6)),
                (svm.grad(&x), finite_difference_gradient(&mut svm_fd, &x, 1e-6)),
            ];
            for (analytic, fd) in pairs {
                for (g, h) in analytic.iter().zip(&fd) {
                    let rel = (g - h).abs() / g.abs().max(1e-8);
                    assert!(rel <= 1e-5, "analytic {g} fd {h}");
                }
            }
        }
    }

    #[test]
    fn synthetic_norms_and_smoothness() {
        let spec = SyntheticSpec { m: 10, n: 3, seed: 1 };
        let p = generate_synthetic(&spec).unwrap();
        let norms: Vec<f64> = p
            .matrix()
            .column_sq_norms()
            .iter()
            .map(|c| c.sqrt())
            .collect();
        assert!((norms[0] - 1.0).abs() < 1e-12);
        assert!((norms[1] - 0.1).abs() < 1e-12);
        assert!((norms[2] - 0.1).abs() < 1e-12);

        // determinism
        let q = generate_synthetic(&spec).unwrap();
        assert_eq!(p.matrix(), q.matrix());
        assert_eq!(p.targets(), q.targets());

        // L_1 = 1/m + 1/m; L_i>=2 = (1/m)(1/m^2) + 1/m
        let m = 10.0f64;
        let l = p.exact_smoothness();
        assert!((l.constants()[0] - 2.0 / m).abs() < 1e-14);
        for i in 1..3 {
            assert!((l.constants()[i] - (1.0 / (m * m * m) + 1.0 / m)).abs() < 1e-14);
        }
    }
}
