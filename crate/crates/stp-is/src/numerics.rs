//! Dense/sparse linear algebra shared by the problem suite and optimizer.
//!
//! The data matrix is stored in CSR because objective evaluation is
//! row-dot-product dominated; column square norms are computed once at
//! load time and cached by the problems.

use thiserror::Error;

/// Iterates and directions are plain `Vec<f64>`.
pub type DenseVector = Vec<f64>;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("invalid CSR structure: {0}")]
    InvalidCsr(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("target norm for column {0} must be strictly positive")]
    NonPositiveTarget(usize),
}

/// Immutable sparse matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-entry triplets. Entries may arrive in any order;
    /// duplicates within a row are rejected.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, NumericsError> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= rows || c >= cols {
                return Err(NumericsError::InvalidCsr(format!(
                    "entry ({r},{c}) out of bounds for {rows}x{cols}"
                )));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(NumericsError::InvalidCsr(format!(
                    "duplicate entry at ({},{})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for &(r, c, v) in &entries {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds from a dense row-major buffer; zero entries are dropped.
    pub fn from_dense(rows: usize, cols: usize, data: &[f64]) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        let triplets = (0..rows).flat_map(|r| {
            (0..cols).filter_map(move |c| {
                let v = data[r * cols + c];
                (v != 0.0).then_some((r, c, v))
            })
        });
        Self::from_triplets(rows, cols, triplets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// (column index, value) pairs of row `r`, ascending in column.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// a_r · x for row r.
    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        self.row(r).map(|(c, v)| v * x[c]).sum()
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Result<DenseVector, NumericsError> {
        if x.len() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows).map(|r| self.row_dot(r, x)).collect())
    }

    /// y = Aᵀ x.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<DenseVector, NumericsError> {
        if x.len() != self.rows {
            return Err(NumericsError::DimensionMismatch {
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[c] += v * x[r];
            }
        }
        Ok(out)
    }

    /// c_i = Σ_r A(r,i)².
    pub fn column_sq_norms(&self) -> DenseVector {
        let mut out = vec![0.0; self.cols];
        for (_, c, v) in self.triplets() {
            out[c] += v * v;
        }
        out
    }

    /// Rescales each column so its l2 norm equals the target. Zero columns
    /// are left untouched and their indices returned.
    pub fn normalize_columns(
        &self,
        target_norms: &[f64],
    ) -> Result<(SparseMatrix, Vec<usize>), NumericsError> {
        if target_norms.len() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                got: target_norms.len(),
            });
        }
        if let Some(i) = target_norms.iter().position(|&t| t <= 0.0) {
            return Err(NumericsError::NonPositiveTarget(i));
        }
        let norms: Vec<f64> = self.column_sq_norms().iter().map(|c| c.sqrt()).collect();
        let zero_cols: Vec<usize> = norms
            .iter()
            .enumerate()
            .filter_map(|(i, &n)| (n == 0.0).then_some(i))
            .collect();
        let scale: Vec<f64> = norms
            .iter()
            .zip(target_norms)
            .map(|(&n, &t)| if n == 0.0 { 1.0 } else { t / n })
            .collect();
        let mut out = self.clone();
        for k in 0..out.values.len() {
            out.values[k] *= scale[out.col_idx[k]];
        }
        Ok((out, zero_cols))
    }
}

/// Small dense row-major matrix, used for change-of-variables wrappers and
/// the normal-equation solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn matvec(&self, x: &[f64]) -> Result<DenseVector, NumericsError> {
        if x.len() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| self.data[r * self.cols + c] * x[c])
                    .sum()
            })
            .collect())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.data[k * other.cols + c];
                }
            }
        }
        Ok(out)
    }

    /// Solves M x = b by Cholesky factorization; M must be symmetric
    /// positive definite.
    pub fn cholesky_solve(&self, b: &[f64]) -> Result<DenseVector, NumericsError> {
        let n = self.rows;
        if self.cols != n {
            return Err(NumericsError::InvalidCsr("cholesky needs square".into()));
        }
        if b.len() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        // lower-triangular factor L with M = L Lᵀ
        let mut l = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.data[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(NumericsError::InvalidCsr(format!(
                            "matrix not positive definite at pivot {i} (value {s})"
                        )));
                    }
                    l[i * n + j] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        // forward then backward substitution
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
            y[i] = (b[i] - s) / l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
            x[i] = (y[i] - s) / l[i * n + i];
        }
        Ok(x)
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn linf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SparseMatrix {
        SparseMatrix::from_dense(2, 2, &[1.0, 0.0, 0.0, 2.0]).unwrap()
    }

    #[test]
    fn column_sq_norms_basic() {
        assert_eq!(toy().column_sq_norms(), vec![1.0, 4.0]);
        let zero = SparseMatrix::from_triplets(2, 3, []).unwrap();
        assert_eq!(zero.column_sq_norms(), vec![0.0, 0.0, 0.0]);
        let row = SparseMatrix::from_dense(1, 2, &[3.0, 4.0]).unwrap();
        assert_eq!(row.column_sq_norms(), vec![9.0, 16.0]);
    }

    #[test]
    fn normalize_columns_reports_zero_columns() {
        let a = SparseMatrix::from_dense(2, 2, &[3.0, 0.0, 4.0, 0.0]).unwrap();
        let (b, zeros) = a.normalize_columns(&[1.0, 1.0]).unwrap();
        assert_eq!(zeros, vec![1]);
        let norms = b.column_sq_norms();
        assert!((norms[0] - 1.0).abs() < 1e-12);
        assert_eq!(norms[1], 0.0);
    }

    #[test]
    fn normalize_columns_scalar() {
        let a = SparseMatrix::from_dense(1, 1, &[2.0]).unwrap();
        let (b, zeros) = a.normalize_columns(&[1.0]).unwrap();
        assert!(zeros.is_empty());
        assert_eq!(b.row(0).collect::<Vec<_>>(), vec![(0, 1.0)]);
    }

    #[test]
    fn normalize_columns_hits_targets() {
        let mut rng = crate::rng::SeededRng::new(11);
        let data: Vec<f64> = (0..15).map(|_| rng.gaussian()).collect();
        let a = SparseMatrix::from_dense(5, 3, &data).unwrap();
        let targets = [1.0, 0.2, 0.2];
        let (b, zeros) = a.normalize_columns(&targets).unwrap();
        assert!(zeros.is_empty());
        for (i, c) in b.column_sq_norms().iter().enumerate() {
            let rel = (c.sqrt() - targets[i]).abs() / targets[i];
            assert!(rel < 1e-12, "column {i}: {rel}");
        }
    }

    #[test]
    fn csr_round_trip_identity() {
        let a = SparseMatrix::from_triplets(3, 4, [(0, 1, 2.0), (2, 0, -1.0), (2, 3, 4.0)]).unwrap();
        let b = SparseMatrix::from_triplets(3, 4, a.triplets().collect::<Vec<_>>()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_triplets_rejected() {
        assert!(SparseMatrix::from_triplets(1, 1, [(0, 0, 1.0), (0, 0, 2.0)]).is_err());
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // M = [[4,2],[2,3]], b = [2,1] -> x = [0.5, 0]
        let m = DenseMatrix::new(2, 2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let x = m.cholesky_solve(&[2.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14);
        assert!(x[1].abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = DenseMatrix::new(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(m.cholesky_solve(&[1.0, 1.0]).is_err());
    }
}
