//! Experiment configuration, the seed-replicated runner behind the `run`
//! subcommand, CSV emission and the manifest that makes every run
//! reproducible from disk.
//!
//! The manifest echoes the fully resolved configuration (including the
//! generator algorithm id, computed smoothness constants, probabilities
//! and step scaling) so that `run --config manifest.json` reproduces all
//! CSVs byte-identically.

use crate::bounds::{self, BoundInputs};
use crate::libsvm;
use crate::lipschitz::{estimated_smoothness, fit_surrogate, SampleBuffer};
use crate::numerics::DenseMatrix;
use crate::objective::{CoordinateSmoothness, Function, Objective, TransformedObjective};
use crate::optimizer::{
    aggregate_traces, stp_is_run, AggregateRecord, RunConfig, RunTrace, X0Spec,
};
use crate::problems::{generate_synthetic, RidgeProblem, SquaredSvmProblem, SyntheticSpec};
use crate::rng::{SeededRng, RNG_ALGORITHM};
use crate::sampler::{CoordinateSampler, SamplingStrategy};
use crate::stepsize::{optimal_alpha0, StepSizeSchedule};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
}

impl ExperimentError {
    /// CLI exit codes: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Data(_) => 3,
            ExperimentError::Numerical(_) => 4,
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> ExperimentError {
    ExperimentError::Config(e.to_string())
}

fn data_err<E: std::fmt::Display>(e: E) -> ExperimentError {
    ExperimentError::Data(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Synthetic,
    RidgeFile,
    SvmFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleSpec {
    Decay,
    Fixed,
    Gap,
    GapSc,
    Fd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FStarSource {
    ExactSolve,
    Given,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformSpec {
    None,
    Gaussian,
}

/// Flat experiment description; serializable to and from JSON with
/// unknown keys rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    /// LIBSVM file path (ridge-file / svm-file problems)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// label mapped to +1 for svm-file problems
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_class: Option<f64>,
    /// column-count override for LIBSVM files
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// seed for synthetic data generation
    #[serde(default)]
    pub data_seed: u64,
    /// ridge/svm regularization; defaults to 1/m for synthetic
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg_lambda: Option<f64>,

    pub sampling: SamplingStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_p: Option<Vec<f64>>,
    pub stepsize: ScheduleSpec,
    /// decay/gap schedules; None resolves to the optimal value for decay
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    /// fixed schedule target accuracy
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// fd probe length
    #[serde(default = "default_t")]
    pub t: f64,
    /// strong-convexity parameter for gap-sc; defaults to reg_lambda
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "default_fstar")]
    pub fstar: FStarSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fstar_value: Option<f64>,

    pub iters: u64,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default)]
    pub x0: X0Spec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_budget: Option<u64>,
    #[serde(default)]
    pub record_grad: bool,

    #[serde(default = "default_transform")]
    pub transform: TransformSpec,
    #[serde(default)]
    pub transform_seed: u64,

    #[serde(default)]
    pub estimate_l: bool,
    /// refit cadence in iterations; 0 means estimate once up front
    #[serde(default)]
    pub refit_period: u64,
}

fn default_t() -> f64 {
    1e-4
}

fn default_fstar() -> FStarSource {
    FStarSource::ExactSolve
}

fn default_seeds() -> u64 {
    1
}

fn default_stride() -> u64 {
    1
}

fn default_transform() -> TransformSpec {
    TransformSpec::None
}

/// Everything a run needs, resolved from the config once.
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub dim: usize,
    pub smoothness: Option<CoordinateSmoothness>,
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub sampler: CoordinateSampler,
    pub f_star: Option<f64>,
    pub alpha0: Option<f64>,
    pub r0: Option<f64>,
    pub level_radius: Option<f64>,
    problem: ProblemInstance,
}

#[derive(Clone)]
enum ProblemInstance {
    Ridge(RidgeProblem),
    Svm(SquaredSvmProblem),
}

impl ProblemInstance {
    fn dim(&self) -> usize {
        match self {
            ProblemInstance::Ridge(p) => p.dim(),
            ProblemInstance::Svm(p) => p.dim(),
        }
    }

    fn exact_smoothness(&self) -> CoordinateSmoothness {
        match self {
            ProblemInstance::Ridge(p) => p.exact_smoothness(),
            ProblemInstance::Svm(p) => p.exact_smoothness(),
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ProblemInstance::Ridge(p) => p.eval(x),
            ProblemInstance::Svm(p) => p.eval(x),
        }
    }

    fn lambda(&self) -> f64 {
        match self {
            ProblemInstance::Ridge(p) => p.lambda(),
            ProblemInstance::Svm(p) => p.lambda(),
        }
    }
}

fn load_problem(config: &ExperimentConfig) -> Result<ProblemInstance, ExperimentError> {
    match config.problem {
        ProblemKind::Synthetic => {
            let m = config
                .m
                .ok_or_else(|| config_err("synthetic problem needs --m"))?;
            let n = config
                .n
                .ok_or_else(|| config_err("synthetic problem needs --n"))?;
            let prob = generate_synthetic(&SyntheticSpec {
                m,
                n,
                seed: config.data_seed,
            })
            .map_err(config_err)?;
            Ok(ProblemInstance::Ridge(prob))
        }
        ProblemKind::RidgeFile | ProblemKind::SvmFile => {
            let path = config
                .data
                .as_ref()
                .ok_or_else(|| config_err("file-backed problem needs --data"))?;
            let file = fs::File::open(path).map_err(data_err)?;
            let ds = libsvm::parse_libsvm_with_dims(BufReader::new(file), config.dims)
                .map_err(data_err)?;
            let m = ds.x.rows().max(1) as f64;
            let lambda = config.reg_lambda.unwrap_or(1.0 / m);
            match config.problem {
                ProblemKind::RidgeFile => Ok(ProblemInstance::Ridge(
                    RidgeProblem::new(ds.x, ds.labels, lambda).map_err(data_err)?,
                )),
                ProblemKind::SvmFile => {
                    let positive = config.positive_class.unwrap_or(1.0);
                    let ds = libsvm::binarize_labels(&ds, positive);
                    Ok(ProblemInstance::Svm(
                        SquaredSvmProblem::new(ds.x, ds.labels, lambda).map_err(data_err)?,
                    ))
                }
                ProblemKind::Synthetic => unreachable!(),
            }
        }
    }
}

fn initial_point_for_r0(dim: usize, x0: &X0Spec) -> Option<Vec<f64>> {
    match x0 {
        X0Spec::Zeros => Some(vec![0.0; dim]),
        X0Spec::Given(x) => Some(x.clone()),
        // r0 is seed-dependent for random starts; bounds are skipped
        X0Spec::Gaussian => None,
    }
}

/// Initial design used when constants must be estimated: 3n+1 Gaussian
/// probes around the origin.
fn estimate_initial_smoothness(
    obj: &mut Objective,
    seed: u64,
) -> Result<CoordinateSmoothness, ExperimentError> {
    let n = obj.dim();
    let mut rng = SeededRng::new(seed ^ 0x5f5f_5f5f_5f5f_5f5f);
    let mut buffer = SampleBuffer::with_default_capacity(n);
    for _ in 0..(3 * n + 1) {
        let x: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let f = obj.evaluate(&x).map_err(config_err)?;
        buffer.push(x, f).map_err(config_err)?;
    }
    let surrogate = fit_surrogate(&buffer).map_err(|e| ExperimentError::Numerical(e.to_string()))?;
    Ok(estimated_smoothness(&surrogate).0)
}

pub fn resolve(config: ExperimentConfig) -> Result<ResolvedExperiment, ExperimentError> {
    if config.iters == 0 {
        return Err(config_err("iters must be >= 1"));
    }
    if config.stride == 0 {
        return Err(config_err("stride must be >= 1"));
    }
    let problem = load_problem(&config)?;
    let dim = problem.dim();

    let transformed = config.transform == TransformSpec::Gaussian;
    let smoothness: Option<CoordinateSmoothness> = if transformed {
        if config.estimate_l {
            let mut obj = build_objective(&problem, &config, None)?;
            Some(estimate_initial_smoothness(&mut obj, config.transform_seed)?)
        } else {
            None
        }
    } else if config.estimate_l {
        let mut obj = build_objective(&problem, &config, None)?;
        Some(estimate_initial_smoothness(&mut obj, config.seed_base)?)
    } else {
        Some(problem.exact_smoothness())
    };

    let sampler = match config.sampling {
        SamplingStrategy::Uniform => CoordinateSampler::uniform(dim).map_err(config_err)?,
        SamplingStrategy::SqrtL => {
            let l = smoothness.as_ref().ok_or_else(|| {
                config_err("sqrtL sampling needs smoothness constants (use --estimate-L with --transform)")
            })?;
            CoordinateSampler::from_sqrt_smoothness(l).map_err(config_err)?
        }
        SamplingStrategy::L => {
            let l = smoothness.as_ref().ok_or_else(|| {
                config_err("L sampling needs smoothness constants (use --estimate-L with --transform)")
            })?;
            CoordinateSampler::from_smoothness(l).map_err(config_err)?
        }
        SamplingStrategy::Custom => {
            let p = config
                .custom_p
                .as_ref()
                .ok_or_else(|| config_err("custom sampling needs custom_p"))?;
            CoordinateSampler::custom(p).map_err(config_err)?
        }
    };
    let p = sampler.probabilities().to_vec();

    // default v: L_i when known (sqrt(L_i) under sqrtL sampling), else 1
    let v: Vec<f64> = match (&smoothness, config.sampling) {
        (Some(l), SamplingStrategy::SqrtL) => {
            l.constants().iter().map(|x| x.sqrt()).collect()
        }
        (Some(l), _) => l.constants().to_vec(),
        (None, _) => vec![1.0; dim],
    };

    let f_star = match config.fstar {
        FStarSource::Given => Some(config.fstar_value.ok_or_else(|| {
            config_err("fstar = given requires fstar_value")
        })?),
        FStarSource::None => None,
        FStarSource::ExactSolve => match &problem {
            ProblemInstance::Ridge(r) => {
                Some(r.exact_solve().map_err(|e| ExperimentError::Numerical(e.to_string()))?.1)
            }
            // no closed form for the squared hinge; gap column is omitted
            ProblemInstance::Svm(_) => None,
        },
    };

    let r0 = match (f_star, initial_point_for_r0(dim, &config.x0), transformed) {
        (Some(fs), Some(x0), false) => Some(problem.eval(&x0) - fs),
        _ => None,
    };

    let level_radius = match (&problem, initial_point_for_r0(dim, &config.x0), transformed) {
        (ProblemInstance::Ridge(r), Some(x0), false) => {
            r.level_radius(&x0).ok()
        }
        _ => None,
    };

    let alpha0 = match config.stepsize {
        ScheduleSpec::Decay => Some(match config.alpha0 {
            Some(a) => a,
            None => {
                let l = smoothness.as_ref().ok_or_else(|| {
                    config_err("decay schedule without --alpha0 needs smoothness constants")
                })?;
                let r0 = r0.ok_or_else(|| {
                    config_err("decay schedule without --alpha0 needs a known f* and fixed x0")
                })?;
                optimal_alpha0(l, &p, &v, r0).map_err(config_err)?
            }
        }),
        ScheduleSpec::Gap | ScheduleSpec::GapSc => Some(config.alpha0.unwrap_or(1.0)),
        _ => config.alpha0,
    };

    Ok(ResolvedExperiment {
        config,
        dim,
        smoothness,
        p,
        v,
        sampler,
        f_star,
        alpha0,
        r0,
        level_radius,
        problem,
    })
}

fn build_objective(
    problem: &ProblemInstance,
    config: &ExperimentConfig,
    f_star: Option<f64>,
) -> Result<Objective, ExperimentError> {
    let boxed: Box<dyn Function + Send> = match (problem.clone(), config.transform) {
        (ProblemInstance::Ridge(r), TransformSpec::None) => Box::new(r),
        (ProblemInstance::Svm(s), TransformSpec::None) => Box::new(s),
        (p, TransformSpec::Gaussian) => {
            let n = p.dim();
            let mut rng = SeededRng::new(config.transform_seed);
            let b = DenseMatrix::new(n, n, (0..n * n).map(|_| rng.gaussian()).collect())
                .expect("square by construction");
            match p {
                ProblemInstance::Ridge(r) => {
                    Box::new(TransformedObjective::new(r, b).map_err(config_err)?)
                }
                ProblemInstance::Svm(s) => {
                    Box::new(TransformedObjective::new(s, b).map_err(config_err)?)
                }
            }
        }
    };
    let mut obj = Objective::new(boxed);
    if let Some(fs) = f_star {
        obj = obj.with_f_star(fs);
    }
    Ok(obj)
}

impl ResolvedExperiment {
    pub fn make_objective(&self) -> Result<Objective, ExperimentError> {
        build_objective(&self.problem, &self.config, self.f_star)
    }

    pub fn make_schedule(&self) -> Result<StepSizeSchedule, ExperimentError> {
        let v = self.v.clone();
        Ok(match self.config.stepsize {
            ScheduleSpec::Decay => StepSizeSchedule::decay(
                v,
                self.alpha0
                    .ok_or_else(|| config_err("decay schedule needs alpha0"))?,
            ),
            ScheduleSpec::Fixed => StepSizeSchedule::fixed(
                v,
                self.config
                    .epsilon
                    .ok_or_else(|| config_err("fixed schedule needs --epsilon"))?,
            ),
            ScheduleSpec::Gap => StepSizeSchedule::gap_convex(
                v,
                self.alpha0.unwrap_or(1.0),
                self.f_star
                    .ok_or_else(|| config_err("gap schedule needs a known f*"))?,
            ),
            ScheduleSpec::GapSc => {
                let lambda = self
                    .config
                    .lambda
                    .or(self.config.reg_lambda)
                    .ok_or_else(|| config_err("gap-sc schedule needs --lambda"))?;
                StepSizeSchedule::gap_strongly_convex(
                    v,
                    self.alpha0.unwrap_or(1.0),
                    self.f_star
                        .ok_or_else(|| config_err("gap-sc schedule needs a known f*"))?,
                    lambda,
                    &self.p,
                )
            }
            ScheduleSpec::Fd => StepSizeSchedule::finite_diff(v, self.config.t),
        })
    }

    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            max_iters: self.config.iters,
            seed,
            trace_stride: self.config.stride,
            eval_budget: self.config.eval_budget,
            target_gap: self.config.target_gap,
            x0: self.config.x0.clone(),
            record_states: false,
            record_grad: self.config.record_grad,
        }
    }

    pub fn bound_inputs(&self, epsilon: f64) -> Option<BoundInputs> {
        Some(BoundInputs {
            l: self.smoothness.clone()?,
            p: self.p.clone(),
            v: self.v.clone(),
            epsilon,
            r0: self.r0?,
            level_radius: self.level_radius,
            lambda: Some(
                self.config
                    .lambda
                    .or(self.config.reg_lambda)
                    .unwrap_or_else(|| self.problem.lambda()),
            ),
        })
    }
}

/// Theoretical iteration counts echoed into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub k_nonconvex_decay: f64,
    pub k_nonconvex_fixed: Option<f64>,
    pub k_convex: Option<f64>,
    pub k_strongly_convex: Option<f64>,
    pub t_upper_bound_convex: Option<f64>,
}

pub fn bound_report(inputs: &BoundInputs) -> BoundReport {
    BoundReport {
        epsilon: inputs.epsilon,
        k_nonconvex_decay: bounds::k_nonconvex_decay(inputs),
        k_nonconvex_fixed: bounds::k_nonconvex_fixed(inputs).ok(),
        k_convex: bounds::k_convex(inputs).ok(),
        k_strongly_convex: bounds::k_strongly_convex(inputs).ok(),
        t_upper_bound_convex: bounds::t_upper_bound_convex(inputs).ok(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub rng_algorithm: String,
    pub dim: usize,
    pub smoothness: Option<Vec<f64>>,
    pub probabilities: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha0: Option<f64>,
    pub f_star: Option<f64>,
    pub r0: Option<f64>,
    pub level_radius: Option<f64>,
    pub seeds: Vec<u64>,
    pub bounds: Option<BoundReport>,
    pub trace_files: Vec<String>,
    pub aggregate_file: String,
}

/// Either a bare config or a manifest (whose `config` field is reused).
pub fn read_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = fs::read_to_string(path).map_err(data_err)?;
    if let Ok(manifest) = serde_json::from_str::<Manifest>(&text) {
        return Ok(manifest.config);
    }
    serde_json::from_str(&text).map_err(config_err)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(trace: &RunTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "k,evals,f,gap,grad_l1,i_k,alpha")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.k,
            r.evals,
            r.f,
            fmt_opt(r.gap),
            fmt_opt(r.grad_l1),
            r.i_k.map(|i| i.to_string()).unwrap_or_default(),
            fmt_opt(r.alpha),
        )?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(agg: &[AggregateRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "k,gap_mean,gap_min,gap_max")?;
    for r in agg {
        writeln!(w, "{},{},{},{}", r.k, r.gap_mean, r.gap_min, r.gap_max)?;
    }
    Ok(())
}

fn threads_from_env() -> usize {
    std::env::var("STPIS_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|p| p.get())
                .unwrap_or(1)
        })
}

/// Runs every seed of the experiment and returns (traces, aggregate).
/// Estimation refits (estimate_l with refit_period > 0) run each seed in
/// segments, re-deriving p and v from the surrogate between segments.
pub fn run_all_seeds(
    exp: &ResolvedExperiment,
) -> Result<(Vec<RunTrace>, Vec<AggregateRecord>), ExperimentError> {
    let seeds: Vec<u64> = (0..exp.config.seeds)
        .map(|s| exp.config.seed_base + s)
        .collect();
    let threads = threads_from_env().min(seeds.len());

    let run_one = |seed: u64| -> Result<RunTrace, ExperimentError> {
        if exp.config.estimate_l && exp.config.refit_period > 0 {
            run_with_refits(exp, seed)
        } else {
            let mut obj = exp.make_objective()?;
            let schedule = exp.make_schedule()?;
            stp_is_run(&mut obj, &exp.sampler, &schedule, &exp.run_config(seed))
                .map_err(|e| ExperimentError::Numerical(e.to_string()))
        }
    };

    let mut traces: Vec<Option<Result<RunTrace, ExperimentError>>> =
        (0..seeds.len()).map(|_| None).collect();
    if threads <= 1 {
        for (slot, &seed) in traces.iter_mut().zip(&seeds) {
            *slot = Some(run_one(seed));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(&mut traces);
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if idx >= seeds.len() {
                        break;
                    }
                    let out = run_one(seeds[idx]);
                    slots.lock().unwrap()[idx] = Some(out);
                });
            }
        });
    }
    let traces: Vec<RunTrace> = traces
        .into_iter()
        .map(|t| t.expect("all slots filled"))
        .collect::<Result<_, _>>()?;
    let aggregate = aggregate_traces(&traces);
    Ok((traces, aggregate))
}

/// Segmented run: every `refit_period` iterations the surrogate is
/// refitted on the iterates seen so far and the sampler/schedule rebuilt.
fn run_with_refits(exp: &ResolvedExperiment, seed: u64) -> Result<RunTrace, ExperimentError> {
    let period = exp.config.refit_period;
    let mut obj = exp.make_objective()?;
    let n = obj.dim();
    let mut buffer = SampleBuffer::with_default_capacity(n);
    let mut smoothness = exp
        .smoothness
        .clone()
        .ok_or_else(|| config_err("refitting needs an initial estimate"))?;

    let mut records = Vec::new();
    let mut x0 = exp.run_config(seed).x0;
    let mut done = 0u64;
    let mut eval_offset = 0u64;
    let mut final_trace: Option<RunTrace> = None;
    while done < exp.config.iters {
        let span = period.min(exp.config.iters - done);
        let sampler = match exp.config.sampling {
            SamplingStrategy::SqrtL => {
                CoordinateSampler::from_sqrt_smoothness(&smoothness).map_err(config_err)?
            }
            SamplingStrategy::Uniform => CoordinateSampler::uniform(n).map_err(config_err)?,
            _ => CoordinateSampler::from_smoothness(&smoothness).map_err(config_err)?,
        };
        let v: Vec<f64> = match exp.config.sampling {
            SamplingStrategy::SqrtL => smoothness.constants().iter().map(|x| x.sqrt()).collect(),
            _ => smoothness.constants().to_vec(),
        };
        let schedule = match exp.config.stepsize {
            ScheduleSpec::Fd => StepSizeSchedule::finite_diff(v, exp.config.t),
            ScheduleSpec::Decay => StepSizeSchedule::decay(v, exp.alpha0.unwrap_or(1.0)),
            ScheduleSpec::Fixed => StepSizeSchedule::fixed(
                v,
                exp.config
                    .epsilon
                    .ok_or_else(|| config_err("fixed schedule needs --epsilon"))?,
            ),
            _ => {
                return Err(config_err(
                    "refitting supports fd, decay and fixed schedules",
                ))
            }
        };
        let mut config = exp.run_config(seed.wrapping_add(done));
        config.max_iters = span;
        config.x0 = x0.clone();
        config.record_states = true;
        let trace = stp_is_run(&mut obj, &sampler, &schedule, &config)
            .map_err(|e| ExperimentError::Numerical(e.to_string()))?;
        for mut r in trace.records.iter().cloned() {
            if let Some(x) = r.x.take() {
                // feed the surrogate with visited iterates
                let _ = buffer.push(x, r.f);
            }
            r.k += done;
            r.evals += eval_offset;
            records.push(r);
        }
        // the segment's terminal record duplicates the next segment's k=0
        if done + span < exp.config.iters {
            records.pop();
        }
        done += span;
        eval_offset += trace.total_evals;
        x0 = X0Spec::Given(trace.final_x.clone());
        if let Ok(surrogate) = fit_surrogate(&buffer) {
            smoothness = estimated_smoothness(&surrogate).0;
        }
        final_trace = Some(trace);
    }
    let last = final_trace.expect("at least one segment");
    Ok(RunTrace {
        seed,
        records,
        final_x: last.final_x,
        final_f: last.final_f,
        total_evals: eval_offset,
        iterations: exp.config.iters,
        stop_reason: last.stop_reason,
    })
}

/// Artifacts written by the `run` subcommand.
pub struct RunArtifacts {
    pub manifest_path: PathBuf,
    pub trace_paths: Vec<PathBuf>,
    pub aggregate_path: PathBuf,
}

pub fn run_experiment(
    config: ExperimentConfig,
    out_dir: &Path,
) -> Result<RunArtifacts, ExperimentError> {
    let exp = resolve(config)?;
    let (traces, aggregate) = run_all_seeds(&exp)?;

    fs::create_dir_all(out_dir).map_err(data_err)?;
    let mut trace_paths = Vec::new();
    let mut trace_files = Vec::new();
    for trace in &traces {
        let name = format!("trace_seed_{}.csv", trace.seed);
        let path = out_dir.join(&name);
        let file = fs::File::create(&path).map_err(data_err)?;
        write_trace_csv(trace, BufWriter::new(file)).map_err(data_err)?;
        trace_files.push(name);
        trace_paths.push(path);
    }
    let aggregate_path = out_dir.join("aggregate.csv");
    let file = fs::File::create(&aggregate_path).map_err(data_err)?;
    write_aggregate_csv(&aggregate, BufWriter::new(file)).map_err(data_err)?;

    let bounds = exp
        .bound_inputs(exp.config.epsilon.or(exp.config.target_gap).unwrap_or(1e-3))
        .map(|inputs| bound_report(&inputs));
    let manifest = Manifest {
        rng_algorithm: RNG_ALGORITHM.to_string(),
        dim: exp.dim,
        smoothness: exp.smoothness.as_ref().map(|l| l.constants().to_vec()),
        probabilities: exp.p.clone(),
        v: exp.v.clone(),
        alpha0: exp.alpha0,
        f_star: exp.f_star,
        r0: exp.r0,
        level_radius: exp.level_radius,
        seeds: (0..exp.config.seeds).map(|s| exp.config.seed_base + s).collect(),
        bounds,
        trace_files,
        aggregate_file: "aggregate.csv".to_string(),
        config: exp.config,
    };
    let manifest_path = out_dir.join("manifest.json");
    let file = fs::File::create(&manifest_path).map_err(data_err)?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest).map_err(data_err)?;

    Ok(RunArtifacts {
        manifest_path,
        trace_paths,
        aggregate_path,
    })
}

/// Joins two aggregate CSVs on k: `k,gap_a,gap_b,ratio`.
pub fn compare_report(dir_a: &Path, dir_b: &Path) -> Result<String, ExperimentError> {
    let read = |dir: &Path| -> Result<Vec<(u64, f64)>, ExperimentError> {
        let text = fs::read_to_string(dir.join("aggregate.csv"))
            .map_err(|e| data_err(format!("{}: {e}", dir.display())))?;
        text.lines()
            .skip(1)
            .map(|line| {
                let mut it = line.split(',');
                let k = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| data_err(format!("bad aggregate line `{line}`")))?;
                let mean = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| data_err(format!("bad aggregate line `{line}`")))?;
                Ok((k, mean))
            })
            .collect()
    };
    let a = read(dir_a)?;
    let b = read(dir_b)?;
    if a.is_empty() || a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.0 != y.0) {
        return Err(data_err("aggregate k grids do not match"));
    }
    let mut out = String::from("k,gap_a,gap_b,ratio\n");
    for ((k, ga), (_, gb)) in a.iter().zip(&b) {
        out.push_str(&format!("{},{},{},{}\n", k, ga, gb, ga / gb));
    }
    Ok(out)
}
