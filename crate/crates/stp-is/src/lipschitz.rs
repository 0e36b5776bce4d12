//! Per-coordinate smoothness estimation from queried function values.
//!
//! A diagonal quadratic surrogate f̂(x) = c + gᵀx + ½ Σ h_i x_i² is fitted
//! by least squares over a ring buffer of (x, f(x)) pairs; its curvatures
//! h_i, clamped positive, serve as the L̂_i estimates feeding the sampler
//! and step-size schedules.

use crate::numerics::{DenseMatrix, DenseVector};
use crate::objective::{CoordinateSmoothness, L_FLOOR};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {needed} samples for dim {dim}, buffer holds {got}")]
    NotEnoughSamples {
        dim: usize,
        needed: usize,
        got: usize,
    },
    #[error("normal equations rank-deficient even after damping")]
    RankDeficient,
    #[error("sample dimension {got} does not match buffer dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub const DEFAULT_BUFFER_CAPACITY: usize = 4096;

/// Damping added to the normal equations; buffers from a converging run
/// cluster near x* and are otherwise ill-conditioned.
const RIDGE_DAMPING: f64 = 1e-8;

/// FIFO buffer of (x, f(x)) pairs.
#[derive(Debug, Clone)]
pub struct SampleBuffer {
    dim: usize,
    capacity: usize,
    samples: VecDeque<(DenseVector, f64)>,
}

impl SampleBuffer {
    pub fn new(dim: usize, capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self {
            dim,
            capacity,
            samples: VecDeque::new(),
        }
    }

    pub fn with_default_capacity(dim: usize) -> Self {
        Self::new(dim, DEFAULT_BUFFER_CAPACITY)
    }

    pub fn push(&mut self, x: DenseVector, f: f64) -> Result<(), FitError> {
        if x.len() != self.dim {
            return Err(FitError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((x, f));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = &(DenseVector, f64)> {
        self.samples.iter()
    }
}

/// Fitted diagonal quadratic model.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSurrogate {
    pub c: f64,
    pub g: DenseVector,
    pub h: DenseVector,
}

impl QuadraticSurrogate {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.c
            + x.iter()
                .zip(&self.g)
                .zip(&self.h)
                .map(|((&xi, &gi), &hi)| gi * xi + 0.5 * hi * xi * xi)
                .sum::<f64>()
    }
}

/// Least-squares fit of (c, g, h) over the buffered pairs. Needs at least
/// 2n+1 samples (the parameter count of the diagonal model).
pub fn fit_surrogate(buffer: &SampleBuffer) -> Result<QuadraticSurrogate, FitError> {
    let n = buffer.dim();
    let params = 2 * n + 1;
    if buffer.len() < params {
        return Err(FitError::NotEnoughSamples {
            dim: n,
            needed: params,
            got: buffer.len(),
        });
    }
    // feature vector phi(x) = [1, x_1..x_n, x_1²/2..x_n²/2]
    let phi = |x: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.push(1.0);
        out.extend_from_slice(x);
        out.extend(x.iter().map(|v| 0.5 * v * v));
    };
    let mut normal = DenseMatrix::zeros(params, params);
    let mut rhs = vec![0.0; params];
    let mut feat = Vec::with_capacity(params);
    for (x, f) in buffer.iter() {
        phi(x, &mut feat);
        for i in 0..params {
            rhs[i] += feat[i] * f;
            for j in 0..params {
                normal[(i, j)] += feat[i] * feat[j];
            }
        }
    }
    for i in 0..params {
        normal[(i, i)] += RIDGE_DAMPING;
    }
    let theta = normal
        .cholesky_solve(&rhs)
        .map_err(|_| FitError::RankDeficient)?;
    Ok(QuadraticSurrogate {
        c: theta[0],
        g: theta[1..=n].to_vec(),
        h: theta[n + 1..].to_vec(),
    })
}

/// L̂_i = max(h_i, floor); returns the estimate and how many entries hit
/// the floor.
pub fn estimated_smoothness(surrogate: &QuadraticSurrogate) -> (CoordinateSmoothness, usize) {
    let clamped_below = surrogate.h.iter().filter(|&&h| h < L_FLOOR).count();
    (
        CoordinateSmoothness::new(surrogate.h.clone()),
        clamped_below,
    )
}

/// True iff iteration k is a refit point.
pub fn refresh_policy(k: u64, period: u64) -> bool {
    assert!(period >= 1);
    k % period == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::L_FLOOR;
    use crate::rng::SeededRng;

    fn buffer_from_quadratic(
        c: f64,
        g: &[f64],
        h: &[f64],
        points: usize,
        seed: u64,
    ) -> SampleBuffer {
        let n = g.len();
        let mut rng = SeededRng::new(seed);
        let mut buf = SampleBuffer::with_default_capacity(n);
        for _ in 0..points {
            let x: Vec<f64> = (0..n).map(|_| 2.0 * rng.gaussian()).collect();
            let f = c
                + x.iter()
                    .zip(g)
                    .zip(h)
                    .map(|((&xi, &gi), &hi)| gi * xi + 0.5 * hi * xi * xi)
                    .sum::<f64>();
            buf.push(x, f).unwrap();
        }
        buf
    }

    #[test]
    fn exact_recovery_1d() {
        let buf = buffer_from_quadratic(3.0, &[2.0], &[5.0], 10, 1);
        let s = fit_surrogate(&buf).unwrap();
        assert!((s.c - 3.0).abs() < 1e-8);
        assert!((s.g[0] - 2.0).abs() < 1e-8);
        assert!((s.h[0] - 5.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_clamps_curvature() {
        let buf = buffer_from_quadratic(4.0, &[0.0], &[0.0], 12, 2);
        let s = fit_surrogate(&buf).unwrap();
        assert!(s.g[0].abs() < 1e-6);
        // fitted curvature is tiny numerical noise, not exactly zero
        assert!(s.h[0].abs() < 1e-6);

        // zero or negative curvature is clamped to the floor
        let degenerate = QuadraticSurrogate {
            c: 0.0,
            g: vec![0.0, 1.0],
            h: vec![0.0, -3.0],
        };
        let (l, clamped) = estimated_smoothness(&degenerate);
        assert_eq!(l.constants(), &[L_FLOOR, L_FLOOR]);
        assert_eq!(clamped, 2);
    }

    #[test]
    fn exact_recovery_2d() {
        let buf = buffer_from_quadratic(0.5, &[1.0, -2.0], &[1.0, 4.0], 20, 3);
        let s = fit_surrogate(&buf).unwrap();
        assert!((s.h[0] - 1.0).abs() < 1e-6);
        assert!((s.h[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let buf = buffer_from_quadratic(0.0, &[1.0, 1.0], &[1.0, 1.0], 4, 4);
        assert!(matches!(
            fit_surrogate(&buf),
            Err(FitError::NotEnoughSamples { needed: 5, .. })
        ));
    }

    #[test]
    fn ring_buffer_evicts_fifo() {
        let mut buf = SampleBuffer::new(1, 2);
        buf.push(vec![1.0], 1.0).unwrap();
        buf.push(vec![2.0], 2.0).unwrap();
        buf.push(vec![3.0], 3.0).unwrap();
        let xs: Vec<f64> = buf.iter().map(|(x, _)| x[0]).collect();
        assert_eq!(xs, vec![2.0, 3.0]);
    }

    #[test]
    fn estimated_smoothness_clamps_negative() {
        let s = QuadraticSurrogate {
            c: 0.0,
            g: vec![0.0, 0.0],
            h: vec![-1.0, 2.0],
        };
        let (l, clamped) = estimated_smoothness(&s);
        assert_eq!(l.constants(), &[L_FLOOR, 2.0]);
        assert_eq!(clamped, 1);

        let s = QuadraticSurrogate {
            c: 0.0,
            g: vec![0.0, 0.0],
            h: vec![2.0, 3.0],
        };
        let (l, clamped) = estimated_smoothness(&s);
        assert_eq!(l.constants(), &[2.0, 3.0]);
        assert_eq!(clamped, 0);
    }

    #[test]
    fn refresh_policy_cases() {
        assert!(refresh_policy(0, 1));
        assert!(refresh_policy(17, 1));
        assert!(!refresh_policy(49, 50));
        assert!(refresh_policy(100, 50));
    }

    #[test]
    fn more_data_never_hurts_on_model_class() {
        let g = [1.0, -1.0, 0.5];
        let h = [1.0, 4.0, 9.0];
        let mut prev_err = f64::INFINITY;
        for points in [7, 20, 80, 300] {
            let buf = buffer_from_quadratic(1.0, &g, &h, points, 5);
            let s = fit_surrogate(&buf).unwrap();
            let err: f64 = s
                .h
                .iter()
                .zip(&h)
                .map(|(a, b)| (a - b).abs() / b)
                .fold(0.0, f64::max);
            assert!(err <= prev_err + 1e-9, "error grew: {prev_err} -> {err}");
            prev_err = err;
        }
    }
}
