//! Per-iteration step-size rules.
//!
//! Every rule outputs a step proportional to 1/v_i for the sampled
//! coordinate; the four kinds differ in the numerator:
//!   decay     α₀/√(k+1)
//!   fixed     ε/n
//!   gap       α₀(f(x_k)−f*)        (convex form)
//!   gap-sc    α₀√(2μ(f(x_k)−f*))   with μ = λ / max_i(v_i/p_i)
//!   fd        |f(x_k + t e_i) − f(x_k)|/t
//!
//! The fd rule performs one probe evaluation per call and returns the
//! probe value alongside the step; the probe is never reused as f(x₊)
//! because the step taken differs from t.

use crate::numerics::DenseVector;
use crate::objective::{CoordinateSmoothness, Objective, ObjectiveError, L_FLOOR};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("gap-based schedule needs a known f(x*)")]
    MissingFStar,
    #[error("negative optimality gap {0} beyond tolerance")]
    NegativeGap(f64),
    #[error("optimal alpha0 needs r0 > 0, got {0}")]
    NonPositiveR0(f64),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Decay,
    Fixed,
    GapConvex,
    GapStronglyConvex,
    FiniteDiff,
}

/// Negative gaps smaller than this are clamped to zero; anything worse is
/// an inconsistent f* and gets reported.
const GAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct StepSizeSchedule {
    kind: ScheduleKind,
    v: DenseVector,
    alpha0: f64,
    epsilon: f64,
    t: f64,
    f_star: Option<f64>,
    mu: f64,
}

fn clamp_v(v: DenseVector) -> DenseVector {
    v.into_iter().map(|x| x.max(L_FLOOR)).collect()
}

impl StepSizeSchedule {
    /// α = α₀ / (v_i √(k+1)).
    pub fn decay(v: DenseVector, alpha0: f64) -> Self {
        assert!(alpha0 > 0.0);
        Self {
            kind: ScheduleKind::Decay,
            v: clamp_v(v),
            alpha0,
            epsilon: 0.0,
            t: 0.0,
            f_star: None,
            mu: 0.0,
        }
    }

    /// α = ε / (n v_i).
    pub fn fixed(v: DenseVector, epsilon: f64) -> Self {
        assert!(epsilon > 0.0);
        Self {
            kind: ScheduleKind::Fixed,
            v: clamp_v(v),
            alpha0: 0.0,
            epsilon,
            t: 0.0,
            f_star: None,
            mu: 0.0,
        }
    }

    /// α = α₀ (f(x_k) − f*) / v_i.
    pub fn gap_convex(v: DenseVector, alpha0: f64, f_star: f64) -> Self {
        assert!(alpha0 > 0.0);
        Self {
            kind: ScheduleKind::GapConvex,
            v: clamp_v(v),
            alpha0,
            epsilon: 0.0,
            t: 0.0,
            f_star: Some(f_star),
            mu: 0.0,
        }
    }

    /// α = (α₀/v_i) √(2μ(f(x_k) − f*)), μ = λ / max_i(v_i/p_i).
    pub fn gap_strongly_convex(
        v: DenseVector,
        alpha0: f64,
        f_star: f64,
        lambda: f64,
        p: &[f64],
    ) -> Self {
        assert!(alpha0 > 0.0 && lambda > 0.0);
        let v = clamp_v(v);
        let max_ratio = v
            .iter()
            .zip(p)
            .map(|(vi, pi)| vi / pi)
            .fold(f64::MIN, f64::max);
        Self {
            kind: ScheduleKind::GapStronglyConvex,
            v,
            alpha0,
            epsilon: 0.0,
            t: 0.0,
            f_star: Some(f_star),
            mu: lambda / max_ratio,
        }
    }

    /// α = |f(x_k + t e_i) − f(x_k)| / (t v_i).
    pub fn finite_diff(v: DenseVector, t: f64) -> Self {
        assert!(t > 0.0);
        Self {
            kind: ScheduleKind::FiniteDiff,
            v: clamp_v(v),
            alpha0: 0.0,
            epsilon: 0.0,
            t,
            f_star: None,
            mu: 0.0,
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn probe_length(&self) -> f64 {
        self.t
    }

    /// True when each call costs one probe evaluation.
    pub fn probes(&self) -> bool {
        self.kind == ScheduleKind::FiniteDiff
    }

    pub fn alpha_decay(&self, k: u64, i: usize) -> f64 {
        debug_assert_eq!(self.kind, ScheduleKind::Decay);
        self.alpha0 / (self.v[i] * ((k + 1) as f64).sqrt())
    }

    pub fn alpha_fixed(&self, i: usize) -> f64 {
        debug_assert_eq!(self.kind, ScheduleKind::Fixed);
        self.epsilon / (self.v.len() as f64 * self.v[i])
    }

    pub fn alpha_gap(&self, f_xk: f64, i: usize) -> Result<f64, StepError> {
        let f_star = self.f_star.ok_or(StepError::MissingFStar)?;
        let gap = f_xk - f_star;
        if gap < -GAP_TOLERANCE {
            return Err(StepError::NegativeGap(gap));
        }
        let gap = gap.max(0.0);
        Ok(match self.kind {
            ScheduleKind::GapConvex => self.alpha0 * gap / self.v[i],
            ScheduleKind::GapStronglyConvex => {
                self.alpha0 / self.v[i] * (2.0 * self.mu * gap).sqrt()
            }
            _ => unreachable!("alpha_gap on non-gap schedule"),
        })
    }

    /// One probe; returns (α, f(x + t e_i)).
    pub fn alpha_fd(
        &self,
        obj: &mut Objective,
        x: &[f64],
        f_xk: f64,
        i: usize,
    ) -> Result<(f64, f64), StepError> {
        debug_assert_eq!(self.kind, ScheduleKind::FiniteDiff);
        let probe = obj.coordinate_probe(x, i, self.t)?;
        Ok(((probe - f_xk).abs() / (self.t * self.v[i]), probe))
    }

    /// Dispatch used by the optimizer loop.
    pub fn compute(
        &self,
        k: u64,
        i: usize,
        f_xk: f64,
        obj: &mut Objective,
        x: &[f64],
    ) -> Result<f64, StepError> {
        match self.kind {
            ScheduleKind::Decay => Ok(self.alpha_decay(k, i)),
            ScheduleKind::Fixed => Ok(self.alpha_fixed(i)),
            ScheduleKind::GapConvex | ScheduleKind::GapStronglyConvex => self.alpha_gap(f_xk, i),
            ScheduleKind::FiniteDiff => Ok(self.alpha_fd(obj, x, f_xk, i)?.0),
        }
    }
}

/// α₀* = 8^{1/4} √(r₀ / Σ p_i L_i / v_i²), the minimizer of the decay
/// schedule's iteration bound.
pub fn optimal_alpha0(
    l: &CoordinateSmoothness,
    p: &[f64],
    v: &[f64],
    r0: f64,
) -> Result<f64, StepError> {
    if r0 <= 0.0 {
        return Err(StepError::NonPositiveR0(r0));
    }
    let s = weighted_smoothness_sum(l, p, v);
    Ok(8f64.powf(0.25) * (r0 / s).sqrt())
}

/// Σ p_i L_i / v_i².
pub fn weighted_smoothness_sum(l: &CoordinateSmoothness, p: &[f64], v: &[f64]) -> f64 {
    l.constants()
        .iter()
        .zip(p)
        .zip(v)
        .map(|((&li, &pi), &vi)| pi * li / (vi * vi))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{FnObjective, Objective};

    #[test]
    fn decay_values_and_monotonicity() {
        let s = StepSizeSchedule::decay(vec![1.0, 2.0], 1.0);
        assert_eq!(s.alpha_decay(0, 1), 0.5);
        let s = StepSizeSchedule::decay(vec![1.0], 2.0);
        assert_eq!(s.alpha_decay(3, 0), 1.0);
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let a = s.alpha_decay(k, 0);
            assert!(a < prev);
            prev = a;
        }
    }

    #[test]
    fn fixed_values() {
        let s = StepSizeSchedule::fixed(vec![1.0; 10], 0.1);
        assert!((s.alpha_fixed(0) - 0.01).abs() < 1e-18);
        let s2 = StepSizeSchedule::fixed(vec![2.0; 10], 0.1);
        assert!((s2.alpha_fixed(0) - 0.005).abs() < 1e-18);
        let s3 = StepSizeSchedule::fixed(vec![2.0], 1.0);
        assert_eq!(s3.alpha_fixed(0), 0.5);
    }

    #[test]
    fn gap_convex_values() {
        let s = StepSizeSchedule::gap_convex(vec![1.0], 0.1, 1.0);
        assert_eq!(s.alpha_gap(1.0, 0).unwrap(), 0.0);
        assert!((s.alpha_gap(3.0, 0).unwrap() - 0.2).abs() < 1e-15);
        // slightly-below-f* values clamp to zero
        assert_eq!(s.alpha_gap(1.0 - 1e-12, 0).unwrap(), 0.0);
        assert!(s.alpha_gap(0.0, 0).is_err());
    }

    #[test]
    fn gap_strongly_convex_hand_case() {
        // n = 1, p = v = [1]: mu = lambda = 1; gap 0.5 -> sqrt(2*1*0.5) = 1
        let s = StepSizeSchedule::gap_strongly_convex(vec![1.0], 1.0, 0.0, 1.0, &[1.0]);
        assert!((s.alpha_gap(0.5, 0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(s.alpha_gap(0.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn fd_quadratic_and_linear() {
        let t = 1e-4;
        let s = StepSizeSchedule::finite_diff(vec![1.0], t);
        let mut obj = Objective::new(Box::new(FnObjective::new(1, |x: &[f64]| x[0] * x[0])));
        let (a, probe) = s.alpha_fd(&mut obj, &[1.0], 1.0, 0).unwrap();
        assert!((a - (2.0 + t)).abs() < 1e-9);
        assert!((probe - (1.0 + t) * (1.0 + t)).abs() < 1e-15);
        assert_eq!(obj.eval_count(), 1);

        // linear slope g: alpha = |g|/v exactly
        let s = StepSizeSchedule::finite_diff(vec![2.0], t);
        let mut obj = Objective::new(Box::new(FnObjective::new(1, |x: &[f64]| -3.0 * x[0])));
        let x = vec![-0.7];
        let fx = -3.0 * x[0];
        let (a, _) = s.alpha_fd(&mut obj, &x, fx, 0).unwrap();
        assert!((a - 1.5).abs() < 1e-9);
    }

    #[test]
    fn v_scaling_halves_alpha() {
        let gap = 2.0;
        for (a1, a2) in [
            (
                StepSizeSchedule::decay(vec![1.0], 1.0).alpha_decay(5, 0),
                StepSizeSchedule::decay(vec![2.0], 1.0).alpha_decay(5, 0),
            ),
            (
                StepSizeSchedule::fixed(vec![1.0], 0.3).alpha_fixed(0),
                StepSizeSchedule::fixed(vec![2.0], 0.3).alpha_fixed(0),
            ),
            (
                StepSizeSchedule::gap_convex(vec![1.0], 0.5, 0.0)
                    .alpha_gap(gap, 0)
                    .unwrap(),
                StepSizeSchedule::gap_convex(vec![2.0], 0.5, 0.0)
                    .alpha_gap(gap, 0)
                    .unwrap(),
            ),
        ] {
            assert!((a1 - 2.0 * a2).abs() < 1e-15 * a1.abs().max(1.0));
        }
    }

    #[test]
    fn optimal_alpha0_plug_in() {
        // sum = 1, r0 = 1 -> 8^(1/4)
        let l = CoordinateSmoothness::new(vec![1.0]);
        let a = optimal_alpha0(&l, &[1.0], &[1.0], 1.0).unwrap();
        assert!((a - 8f64.powf(0.25)).abs() < 1e-15);
        // r0 quadrupled -> doubled
        let b = optimal_alpha0(&l, &[1.0], &[1.0], 4.0).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-14);
        assert!(optimal_alpha0(&l, &[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn optimal_alpha0_matches_grid_minimum() {
        // n = 2, uniform p, v = L = [1,4], r0 = 2
        let l = CoordinateSmoothness::new(vec![1.0, 4.0]);
        let p = [0.5, 0.5];
        let v = [1.0, 4.0];
        let r0 = 2.0;
        let s = weighted_smoothness_sum(&l, &p, &v);
        assert!((s - 0.625).abs() < 1e-15);
        let a_star = optimal_alpha0(&l, &p, &v, r0).unwrap();
        assert!((a_star - 8f64.powf(0.25) * (2.0f64 / 0.625).sqrt()).abs() < 1e-12);

        // the bound K(alpha0) = 2 (sqrt(2) r0/alpha0 + alpha0 s/2)^2 / (min p/v)^2 eps^2
        // must be minimized at a_star over a fine grid
        let bound = |a0: f64| {
            let inner = 2f64.sqrt() * r0 / a0 + a0 * s / 2.0;
            2.0 * inner * inner
        };
        let best = bound(a_star);
        let mut grid_best = f64::INFINITY;
        for j in 1..4000 {
            grid_best = grid_best.min(bound(j as f64 * 0.005));
        }
        assert!(best <= grid_best + 1e-9 * grid_best);
    }
}
