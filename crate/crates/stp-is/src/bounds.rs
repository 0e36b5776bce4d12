//! Closed-form iteration-complexity bounds for the four regimes, for
//! reporting next to empirical iteration counts.
//!
//! The strongly-convex bound uses K = (max_i v_i/p_i)/λ · log(2r₀/ε); the
//! published summary table prints log(r₀/ε) instead, without the factor
//! of 2 — the theorem statement wins and the discrepancy is surfaced in
//! the CLI output.

use crate::objective::CoordinateSmoothness;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error(
        "fixed-step bound infeasible: sum p_i L_i / v_i^2 = {lhs} must be < 2 n min(p_i/v_i) = {rhs}"
    )]
    FixedStepInfeasible { lhs: f64, rhs: f64 },
    #[error("missing input: {0}")]
    MissingInput(&'static str),
}

#[derive(Debug, Clone)]
pub struct BoundInputs {
    pub l: CoordinateSmoothness,
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub epsilon: f64,
    pub r0: f64,
    /// level-set radius, convex bounds only
    pub level_radius: Option<f64>,
    /// strong-convexity parameter
    pub lambda: Option<f64>,
}

impl BoundInputs {
    fn n(&self) -> f64 {
        self.l.dim() as f64
    }

    fn min_p_over_v(&self) -> f64 {
        self.p
            .iter()
            .zip(&self.v)
            .map(|(p, v)| p / v)
            .fold(f64::INFINITY, f64::min)
    }

    fn max_v_over_p(&self) -> f64 {
        self.v
            .iter()
            .zip(&self.p)
            .map(|(v, p)| v / p)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn sum_pl_over_v2(&self) -> f64 {
        crate::stepsize::weighted_smoothness_sum(&self.l, &self.p, &self.v)
    }
}

/// Decay schedule at the optimal α₀: K = 4√2 r₀ Σ(p_i L_i/v_i²) / ((min p_i/v_i)² ε²).
pub fn k_nonconvex_decay(inputs: &BoundInputs) -> f64 {
    let min_pv = inputs.min_p_over_v();
    4.0 * 2f64.sqrt() * inputs.r0 * inputs.sum_pl_over_v2()
        / (min_pv * min_pv * inputs.epsilon * inputs.epsilon)
}

/// Fixed schedule: K = 2n r₀ / (min(p/v) (1 − S/(2n min(p/v))) ε²) with
/// S = Σ p_i L_i/v_i², requiring S < 2n min(p/v).
pub fn k_nonconvex_fixed(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let min_pv = inputs.min_p_over_v();
    let s = inputs.sum_pl_over_v2();
    let cap = 2.0 * inputs.n() * min_pv;
    if s >= cap {
        return Err(BoundError::FixedStepInfeasible { lhs: s, rhs: cap });
    }
    Ok(2.0 * inputs.n() * inputs.r0
        / (min_pv * (1.0 - s / cap) * inputs.epsilon * inputs.epsilon))
}

/// Convex fd schedule: K = 8R₀²n/min(p/v) · (1/ε − 1/r₀); 0 when ε ≥ r₀.
pub fn k_convex(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let r_big = inputs
        .level_radius
        .ok_or(BoundError::MissingInput("level_radius (R0)"))?;
    if inputs.epsilon >= inputs.r0 {
        return Ok(0.0);
    }
    Ok(8.0 * r_big * r_big * inputs.n() / inputs.min_p_over_v()
        * (1.0 / inputs.epsilon - 1.0 / inputs.r0))
}

/// Strongly-convex fd schedule: K = max(v/p)/λ · log(2r₀/ε); 0 when ε ≥ 2r₀.
pub fn k_strongly_convex(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let lambda = inputs
        .lambda
        .ok_or(BoundError::MissingInput("lambda (strong convexity)"))?;
    if inputs.epsilon >= 2.0 * inputs.r0 {
        return Ok(0.0);
    }
    Ok(inputs.max_v_over_p() / lambda * (2.0 * inputs.r0 / inputs.epsilon).ln())
}

/// Upper bound on the fd probe length t for the convex theorem: the
/// minimum of the four admissible expressions.
pub fn t_upper_bound_convex(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let r_big = inputs
        .level_radius
        .ok_or(BoundError::MissingInput("level_radius (R0)"))?;
    let n = inputs.n();
    let eps = inputs.epsilon;
    let min_pv = inputs.min_p_over_v();
    let l_max = inputs.l.max();
    let max_sqrt_p = inputs.p.iter().fold(0.0f64, |m, &p| m.max(p.sqrt()));
    let grad_term = max_sqrt_p * (2.0 * n * l_max * inputs.r0).sqrt();
    let sum_pl3_v2: f64 = inputs
        .l
        .constants()
        .iter()
        .zip(&inputs.p)
        .zip(&inputs.v)
        .map(|((&li, &pi), &vi)| pi * li.powi(3) / (vi * vi))
        .sum();

    let t1 = eps * eps * min_pv / (8.0 * r_big * r_big * n * grad_term);
    let t2 = eps / r_big * (min_pv / (n * sum_pl3_v2)).sqrt();
    let t3 = eps / (2.0 * grad_term);
    let t4 = 2.0 * (eps / sum_pl3_v2).sqrt();
    Ok(t1.min(t2).min(t3).min(t4))
}
