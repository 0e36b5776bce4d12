//! The STP_IS main loop: sample a coordinate, compute the step, evaluate
//! x₊ and x₋, keep the best of the three. f(x_k) is cached and never
//! re-evaluated, so a K-iteration run costs exactly
//! 1 + K·(2 + [fd schedule]) evaluations.

use crate::numerics::{l1_norm, DenseVector};
use crate::objective::{Objective, ObjectiveError};
use crate::rng::SeededRng;
use crate::sampler::CoordinateSampler;
use crate::stepsize::{StepError, StepSizeSchedule};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("dimension mismatch: objective {objective}, sampler {sampler}, schedule {schedule}")]
    DimensionMismatch {
        objective: usize,
        sampler: usize,
        schedule: usize,
    },
    #[error("non-finite objective value {value} at iteration {iteration}")]
    NonFinite { iteration: u64, value: f64 },
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Initial iterate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum X0Spec {
    Zeros,
    Given(DenseVector),
    /// i.i.d. standard normal entries drawn from the run rng.
    Gaussian,
}

impl Default for X0Spec {
    fn default() -> Self {
        X0Spec::Zeros
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_iters: u64,
    pub seed: u64,
    /// record every `trace_stride`-th iteration (plus iteration 0 and the last)
    pub trace_stride: u64,
    pub eval_budget: Option<u64>,
    pub target_gap: Option<f64>,
    pub x0: X0Spec,
    /// keep a copy of x at every recorded point (test oracles)
    pub record_states: bool,
    /// compute the ‖∇f‖₁ diagnostic at recorded points when the
    /// objective exposes a gradient
    pub record_grad: bool,
}

impl RunConfig {
    pub fn new(max_iters: u64, seed: u64) -> Self {
        assert!(max_iters >= 1);
        Self {
            max_iters,
            seed,
            trace_stride: 1,
            eval_budget: None,
            target_gap: None,
            x0: X0Spec::Zeros,
            record_states: false,
            record_grad: false,
        }
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        assert!(stride >= 1);
        self.trace_stride = stride;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    EvalBudget,
    TargetGap,
}

/// One recorded point: the state at the start of iteration `k` plus the
/// coordinate and step that iteration used. `i_k`/`alpha` are absent on
/// the final record, which captures the state after the last iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: u64,
    pub evals: u64,
    pub f: f64,
    pub gap: Option<f64>,
    pub grad_l1: Option<f64>,
    pub i_k: Option<usize>,
    pub alpha: Option<f64>,
    pub x: Option<DenseVector>,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    pub final_x: DenseVector,
    pub final_f: f64,
    pub total_evals: u64,
    pub iterations: u64,
    pub stop_reason: StopReason,
}

impl RunTrace {
    pub fn final_gap(&self, f_star: f64) -> f64 {
        self.final_f - f_star
    }
}

fn initial_point(dim: usize, spec: &X0Spec, rng: &mut SeededRng) -> DenseVector {
    match spec {
        X0Spec::Zeros => vec![0.0; dim],
        X0Spec::Given(x) => x.clone(),
        X0Spec::Gaussian => (0..dim).map(|_| rng.gaussian()).collect(),
    }
}

/// Runs Algorithm STP_IS and records a trace. Ties in the argmin prefer
/// x_k, then x₊, so the iterate is a fixed point once the step hits zero.
pub fn stp_is_run(
    obj: &mut Objective,
    sampler: &CoordinateSampler,
    schedule: &StepSizeSchedule,
    config: &RunConfig,
) -> Result<RunTrace, RunError> {
    let n = obj.dim();
    if sampler.dim() != n || schedule.dim() != n {
        return Err(RunError::DimensionMismatch {
            objective: n,
            sampler: sampler.dim(),
            schedule: schedule.dim(),
        });
    }
    let mut rng = SeededRng::new(config.seed);
    let mut x = initial_point(n, &config.x0, &mut rng);
    if let X0Spec::Given(x0) = &config.x0 {
        if x0.len() != n {
            return Err(RunError::DimensionMismatch {
                objective: n,
                sampler: sampler.dim(),
                schedule: schedule.dim(),
            });
        }
    }
    let f_star = obj.f_star();
    let evals_at_start = obj.eval_count();
    let mut fx = obj.evaluate(&x)?;
    if !fx.is_finite() {
        return Err(RunError::NonFinite {
            iteration: 0,
            value: fx,
        });
    }

    let mut records: Vec<TraceRecord> = Vec::new();
    let mut record = |k: u64,
                      evals: u64,
                      f: f64,
                      i_k: Option<usize>,
                      alpha: Option<f64>,
                      x: &[f64],
                      obj: &Objective| {
        records.push(TraceRecord {
            k,
            evals,
            f,
            gap: f_star.map(|fs| f - fs),
            grad_l1: if config.record_grad {
                obj.gradient(x).map(|g| l1_norm(&g))
            } else {
                None
            },
            i_k,
            alpha,
            x: config.record_states.then(|| x.to_vec()),
        });
    };

    let mut stop_reason = StopReason::MaxIters;
    let mut k = 0u64;
    while k < config.max_iters {
        // stop checks before spending this iteration's evaluations
        if let (Some(target), Some(fs)) = (config.target_gap, f_star) {
            if fx - fs <= target {
                stop_reason = StopReason::TargetGap;
                break;
            }
        }
        if let Some(budget) = config.eval_budget {
            let cost = if schedule.probes() { 3 } else { 2 };
            if obj.eval_count() - evals_at_start + cost > budget {
                stop_reason = StopReason::EvalBudget;
                break;
            }
        }

        let i = sampler.draw(&mut rng);
        let alpha = schedule.compute(k, i, fx, obj, &x)?;

        if k % config.trace_stride == 0 {
            record(k, obj.eval_count() - evals_at_start, fx, Some(i), Some(alpha), &x, obj);
        }

        let mut x_plus = x.clone();
        x_plus[i] += alpha;
        let f_plus = obj.evaluate(&x_plus)?;
        let mut x_minus = x.clone();
        x_minus[i] -= alpha;
        let f_minus = obj.evaluate(&x_minus)?;
        if !f_plus.is_finite() || !f_minus.is_finite() {
            return Err(RunError::NonFinite {
                iteration: k,
                value: if f_plus.is_finite() { f_minus } else { f_plus },
            });
        }

        // argmin of {f(x_k), f(x_+), f(x_-)}; ties prefer x_k then x_+
        if f_plus < fx && f_plus <= f_minus {
            x = x_plus;
            fx = f_plus;
        } else if f_minus < fx {
            x = x_minus;
            fx = f_minus;
        }
        k += 1;
    }

    record(k, obj.eval_count() - evals_at_start, fx, None, None, &x, obj);
    let total_evals = obj.eval_count() - evals_at_start;
    Ok(RunTrace {
        seed: config.seed,
        records,
        final_x: x,
        final_f: fx,
        total_evals,
        iterations: k,
        stop_reason,
    })
}

/// Per-k aggregate over seed-replicated runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub k: u64,
    pub gap_mean: f64,
    pub gap_min: f64,
    pub gap_max: f64,
}

#[derive(Debug, Clone)]
pub struct MultiRunResult {
    pub traces: Vec<RunTrace>,
    pub aggregate: Vec<AggregateRecord>,
}

/// Runs `num_seeds` independent replicas with seeds base..base+num_seeds,
/// up to `max_threads` at a time, and aggregates the per-k gap (falling
/// back to raw f when no f* is known). Output is ordered by seed and
/// independent of the thread count.
pub fn stp_is_multi<F>(
    make_objective: F,
    sampler: &CoordinateSampler,
    schedule: &StepSizeSchedule,
    base_config: &RunConfig,
    num_seeds: u64,
    max_threads: usize,
) -> Result<MultiRunResult, RunError>
where
    F: Fn() -> Objective + Sync,
{
    assert!(num_seeds >= 1);
    let configs: Vec<RunConfig> = (0..num_seeds)
        .map(|s| {
            let mut c = base_config.clone();
            c.seed = base_config.seed + s;
            c
        })
        .collect();

    let threads = max_threads.max(1).min(configs.len());
    let mut traces: Vec<Option<Result<RunTrace, RunError>>> =
        (0..configs.len()).map(|_| None).collect();
    if threads == 1 {
        for (slot, config) in traces.iter_mut().zip(&configs) {
            let mut obj = make_objective();
            *slot = Some(stp_is_run(&mut obj, sampler, schedule, config));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results = std::sync::Mutex::new(&mut traces);
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if idx >= configs.len() {
                        break;
                    }
                    let mut obj = make_objective();
                    let trace = stp_is_run(&mut obj, sampler, schedule, &configs[idx]);
                    results.lock().unwrap()[idx] = Some(trace);
                });
            }
        });
    }
    let traces: Vec<RunTrace> = traces
        .into_iter()
        .map(|t| t.expect("every slot filled"))
        .collect::<Result<_, _>>()?;

    let aggregate = aggregate_traces(&traces);
    Ok(MultiRunResult { traces, aggregate })
}

/// Mean/min/max of the gap (or f when no gap is recorded) at each k that
/// appears in every trace.
pub fn aggregate_traces(traces: &[RunTrace]) -> Vec<AggregateRecord> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (idx, rec) in first.records.iter().enumerate() {
        let mut values = Vec::with_capacity(traces.len());
        for t in traces {
            match t.records.get(idx) {
                Some(r) if r.k == rec.k => values.push(r.gap.unwrap_or(r.f)),
                _ => return out, // grids diverge past this point (early stops)
            }
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let max = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        out.push(AggregateRecord {
            k: rec.k,
            gap_mean: mean,
            gap_min: min,
            gap_max: max,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{FnObjective, Objective};
    use crate::problems::{generate_synthetic, SyntheticSpec};
    use crate::sampler::CoordinateSampler;
    use crate::stepsize::StepSizeSchedule;

    fn quad_objective() -> Objective {
        Objective::new(Box::new(FnObjective::new(1, |x: &[f64]| x[0] * x[0])))
    }

    #[test]
    fn argmin_of_three_hand_case() {
        // f(x)=x^2 from x0=1 with a fixed step 0.5: candidates {1, 2.25, 0.25}
        let mut obj = quad_objective();
        let sampler = CoordinateSampler::uniform(1).unwrap();
        // epsilon/(n v) = 0.5 with n=1, v=1, epsilon=0.5
        let schedule = StepSizeSchedule::fixed(vec![1.0], 0.5);
        let mut config = RunConfig::new(1, 0);
        config.x0 = X0Spec::Given(vec![1.0]);
        let trace = stp_is_run(&mut obj, &sampler, &schedule, &config).unwrap();
        assert_eq!(trace.final_x, vec![0.5]);
        assert_eq!(trace.final_f, 0.25);
    }

    #[test]
    fn zero_step_is_fixed_point() {
        let mut obj = quad_objective().with_f_star(0.0);
        let sampler = CoordinateSampler::uniform(1).unwrap();
        let schedule = StepSizeSchedule::gap_convex(vec![1.0], 1.0, 0.0);
        let mut config = RunConfig::new(25, 0);
        config.x0 = X0Spec::Given(vec![0.0]);
        let trace = stp_is_run(&mut obj, &sampler, &schedule, &config).unwrap();
        assert_eq!(trace.final_x, vec![0.0]);
        for r in &trace.records {
            assert_eq!(r.f, 0.0);
        }
    }

    #[test]
    fn ridge_toy_descends_and_trace_monotone() {
        let prob = generate_synthetic(&SyntheticSpec { m: 40, n: 2, seed: 7 }).unwrap();
        let l = prob.exact_smoothness();
        let (_, f_star) = prob.exact_solve().unwrap();
        let sampler = CoordinateSampler::from_smoothness(&l).unwrap();
        let schedule = StepSizeSchedule::finite_diff(l.constants().to_vec(), 1e-4);
        let mut obj = Objective::new(Box::new(prob.clone())).with_f_star(f_star);
        let mut config = RunConfig::new(50, 7);
        config.record_states = true;
        let trace = stp_is_run(&mut obj, &sampler, &schedule, &config).unwrap();
        assert!(trace.final_f - f_star < trace.records[0].f - f_star);
        let mut prev = f64::INFINITY;
        for r in &trace.records {
            assert!(r.f <= prev);
            prev = r.f;
            // independent re-evaluation oracle
            let x = r.x.as_ref().unwrap();
            assert!((prob.eval(x) - r.f).abs() <= 1e-12);
        }
    }

    #[test]
    fn evaluation_accounting_exact() {
        let prob = generate_synthetic(&SyntheticSpec { m: 20, n: 3, seed: 1 }).unwrap();
        let l = prob.exact_smoothness();
        let sampler = CoordinateSampler::uniform(3).unwrap();
        let k = 37;
        for (schedule, probing) in [
            (StepSizeSchedule::finite_diff(l.constants().to_vec(), 1e-4), true),
            (StepSizeSchedule::decay(l.constants().to_vec(), 1.0), false),
            (StepSizeSchedule::fixed(l.constants().to_vec(), 0.1), false),
        ] {
            let mut obj = Objective::new(Box::new(prob.clone()));
            let config = RunConfig::new(k, 5);
            let trace = stp_is_run(&mut obj, &sampler, &schedule, &config).unwrap();
            let expected = 1 + k * if probing { 3 } else { 2 };
            assert_eq!(trace.total_evals, expected);
            assert_eq!(obj.eval_count(), expected);
        }
    }

    #[test]
    fn determinism_byte_identical() {
        let prob = generate_synthetic(&SyntheticSpec { m: 30, n: 4, seed: 9 }).unwrap();
        let l = prob.exact_smoothness();
        let sampler = CoordinateSampler::from_sqrt_smoothness(&l).unwrap();
        let schedule = StepSizeSchedule::finite_diff(l.constants().to_vec(), 1e-4);
        let run = || {
            let mut obj = Objective::new(Box::new(prob.clone()));
            stp_is_run(&mut obj, &sampler, &schedule, &RunConfig::new(100, 123)).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.final_x, b.final_x);
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn coordinate_locality() {
        let prob = generate_synthetic(&SyntheticSpec { m: 30, n: 5, seed: 2 }).unwrap();
        let sampler = CoordinateSampler::uniform(5).unwrap();
        let schedule = StepSizeSchedule::finite_diff(vec![1.0; 5], 1e-4);
        let mut obj = Objective::new(Box::new(prob));
        let mut config = RunConfig::new(60, 3);
        config.record_states = true;
        let trace = stp_is_run(&mut obj, &sampler, &schedule, &config).unwrap();
        for pair in trace.records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.k != a.k + 1 {
                continue;
            }
            let xa = a.x.as_ref().unwrap();
            let xb = b.x.as_ref().unwrap();
            let moved: Vec<usize> = (0..5).filter(|&j| xa[j] != xb[j]).collect();
            assert!(moved.len() <= 1);
            if let Some(&j) = moved.first() {
                assert_eq!(j, a.i_k.unwrap());
            }
        }
    }

    #[test]
    fn eval_budget_and_target_gap_stop() {
        let prob = generate_synthetic(&SyntheticSpec { m: 20, n: 2, seed: 4 }).unwrap();
        let (_, f_star) = prob.exact_solve().unwrap();
        let sampler = CoordinateSampler::uniform(2).unwrap();
        let schedule = StepSizeSchedule::finite_diff(vec![1.0; 2], 1e-4);

        let mut obj = Objective::new(Box::new(prob.clone()));
        let mut config = RunConfig::new(1000, 0);
        config.eval_budget = Some(31);
        let trace = stp_is_run(&mut obj, &sampler, &schedule, &config).unwrap();
        assert_eq!(trace.stop_reason, StopReason::EvalBudget);
        assert!(trace.total_evals <= 31);

        let mut obj = Objective::new(Box::new(prob)).with_f_star(f_star);
        let mut config = RunConfig::new(100_000, 0);
        config.target_gap = Some(1e-4);
        let trace = stp_is_run(&mut obj, &sampler, &schedule, &config).unwrap();
        assert_eq!(trace.stop_reason, StopReason::TargetGap);
        assert!(trace.final_f - f_star <= 1e-4);
    }

    #[test]
    fn non_finite_objective_aborts() {
        let mut obj = Objective::new(Box::new(FnObjective::new(1, |x: &[f64]| {
            if x[0] > 0.5 {
                f64::NAN
            } else {
                x[0] * x[0]
            }
        })));
        let sampler = CoordinateSampler::uniform(1).unwrap();
        let schedule = StepSizeSchedule::fixed(vec![1.0], 1.0);
        let err = stp_is_run(&mut obj, &sampler, &schedule, &RunConfig::new(10, 0));
        assert!(matches!(err, Err(RunError::NonFinite { .. })));
    }

    #[test]
    fn multi_single_seed_equals_single_run() {
        let prob = generate_synthetic(&SyntheticSpec { m: 30, n: 3, seed: 6 }).unwrap();
        let (_, f_star) = prob.exact_solve().unwrap();
        let l = prob.exact_smoothness();
        let sampler = CoordinateSampler::from_smoothness(&l).unwrap();
        let schedule = StepSizeSchedule::finite_diff(l.constants().to_vec(), 1e-4);
        let config = RunConfig::new(50, 77);
        let multi = stp_is_multi(
            || Objective::new(Box::new(prob.clone())).with_f_star(f_star),
            &sampler,
            &schedule,
            &config,
            1,
            1,
        )
        .unwrap();
        let mut obj = Objective::new(Box::new(prob.clone())).with_f_star(f_star);
        let single = stp_is_run(&mut obj, &sampler, &schedule, &config).unwrap();
        assert_eq!(multi.traces[0].records, single.records);
        for (agg, rec) in multi.aggregate.iter().zip(&single.records) {
            assert_eq!(agg.gap_mean, rec.gap.unwrap());
            assert_eq!(agg.gap_min, agg.gap_max);
        }
    }

    #[test]
    fn multi_parallel_matches_sequential() {
        let prob = generate_synthetic(&SyntheticSpec { m: 30, n: 3, seed: 6 }).unwrap();
        let l = prob.exact_smoothness();
        let sampler = CoordinateSampler::from_smoothness(&l).unwrap();
        let schedule = StepSizeSchedule::finite_diff(l.constants().to_vec(), 1e-4);
        let config = RunConfig::new(40, 100);
        let run = |threads| {
            stp_is_multi(
                || Objective::new(Box::new(prob.clone())),
                &sampler,
                &schedule,
                &config,
                6,
                threads,
            )
            .unwrap()
        };
        let seq = run(1);
        let par = run(4);
        for (a, b) in seq.traces.iter().zip(&par.traces) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.records, b.records);
        }
        assert_eq!(seq.aggregate, par.aggregate);
    }
}
