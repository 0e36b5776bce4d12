use clap::{Args, Parser, Subcommand};
use std::fs;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use stp_is::bounds;
use stp_is::experiment::{
    self, bound_report, read_config, resolve, ExperimentConfig, ExperimentError, FStarSource,
    ProblemKind, ScheduleSpec, TransformSpec,
};
use stp_is::libsvm;
use stp_is::optimizer::X0Spec;
use stp_is::sampler::SamplingStrategy;

#[derive(Parser)]
#[command(name = "stpis", about = "Stochastic three-point coordinate search benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write trace/aggregate CSVs plus a manifest
    Run(RunArgs),
    /// Print theoretical iteration-complexity bounds for a problem
    Bounds(BoundsArgs),
    /// Validate a LIBSVM file and optionally rewrite it canonically
    Parse(ParseArgs),
    /// Compare the aggregates of two experiment output directories
    Compare(CompareArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// synthetic | ridge-file | svm-file
    #[arg(long, default_value = "synthetic")]
    problem: String,
    /// LIBSVM data file for file-backed problems
    #[arg(long)]
    data: Option<PathBuf>,
    /// label treated as +1 in svm-file problems
    #[arg(long)]
    positive_class: Option<f64>,
    /// column-count override for LIBSVM data
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// regularization strength (defaults to 1/m)
    #[arg(long)]
    reg_lambda: Option<f64>,
    /// uniform | sqrtL | L | custom
    #[arg(long, default_value = "uniform")]
    sampling: String,
    /// comma-separated probabilities for custom sampling
    #[arg(long)]
    custom_p: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config or a manifest.json from an earlier run; other flags
    /// are ignored when set
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    /// decay | fixed | gap | gap-sc | fd
    #[arg(long, default_value = "fd")]
    stepsize: String,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// finite-difference probe length
    #[arg(long, default_value_t = 1e-4)]
    t: f64,
    /// strong-convexity constant for gap-sc
    #[arg(long)]
    lambda: Option<f64>,
    /// exact-solve | given | none
    #[arg(long, default_value = "exact-solve")]
    fstar: String,
    #[arg(long)]
    fstar_value: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    iters: u64,
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// record every stride-th iteration in the trace
    #[arg(long, default_value_t = 1)]
    stride: u64,
    #[arg(long)]
    target_gap: Option<f64>,
    #[arg(long)]
    eval_budget: Option<u64>,
    #[arg(long)]
    record_grad: bool,
    /// none | gaussian
    #[arg(long, default_value = "none")]
    transform: String,
    #[arg(long, default_value_t = 0)]
    transform_seed: u64,
    /// estimate coordinate smoothness from samples instead of exact values
    #[arg(long = "estimate-L")]
    estimate_l: bool,
    /// refit the smoothness surrogate every N iterations (0 = once up front)
    #[arg(long, default_value_t = 0)]
    refit_period: u64,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// target accuracy
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
}

#[derive(Args)]
struct ParseArgs {
    file: PathBuf,
    #[arg(long)]
    dims: Option<usize>,
    /// write the canonical form here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    dir_a: PathBuf,
    dir_b: PathBuf,
    /// write the comparison CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_sampling(s: &str) -> Result<SamplingStrategy, ExperimentError> {
    match s {
        "uniform" => Ok(SamplingStrategy::Uniform),
        "sqrtL" | "sqrtl" => Ok(SamplingStrategy::SqrtL),
        "L" | "l" => Ok(SamplingStrategy::L),
        "custom" => Ok(SamplingStrategy::Custom),
        _ => Err(ExperimentError::Config(format!(
            "unknown sampling strategy `{s}` (expected uniform, sqrtL, L or custom)"
        ))),
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(
    what: &str,
    s: &str,
) -> Result<T, ExperimentError> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| ExperimentError::Config(format!("unknown {what} `{s}`")))
}

fn config_from_args(args: &RunArgs) -> Result<ExperimentConfig, ExperimentError> {
    let custom_p = match &args.problem.custom_p {
        None => None,
        Some(list) => Some(
            list.split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ExperimentError::Config(format!("bad --custom-p: {e}")))?,
        ),
    };
    Ok(ExperimentConfig {
        problem: parse_enum::<ProblemKind>("problem", &args.problem.problem)?,
        data: args.problem.data.clone(),
        positive_class: args.problem.positive_class,
        dims: args.problem.dims,
        m: args.problem.m,
        n: args.problem.n,
        data_seed: args.problem.data_seed,
        reg_lambda: args.problem.reg_lambda,
        sampling: parse_sampling(&args.problem.sampling)?,
        custom_p,
        stepsize: parse_enum::<ScheduleSpec>("stepsize", &args.stepsize)?,
        alpha0: args.alpha0,
        epsilon: args.epsilon,
        t: args.t,
        lambda: args.lambda,
        fstar: parse_enum::<FStarSource>("fstar", &args.fstar)?,
        fstar_value: args.fstar_value,
        iters: args.iters,
        seeds: args.seeds,
        seed_base: args.seed_base,
        stride: args.stride,
        x0: X0Spec::Zeros,
        target_gap: args.target_gap,
        eval_budget: args.eval_budget,
        record_grad: args.record_grad,
        transform: parse_enum::<TransformSpec>("transform", &args.transform)?,
        transform_seed: args.transform_seed,
        estimate_l: args.estimate_l,
        refit_period: args.refit_period,
    })
}

fn cmd_run(args: RunArgs) -> Result<(), ExperimentError> {
    let config = match &args.config {
        Some(path) => read_config(path)?,
        None => config_from_args(&args)?,
    };
    // warn (don't shrink) when the fd probe exceeds its convex-theory cap
    if config.stepsize == ScheduleSpec::Fd {
        let exp = resolve(config.clone())?;
        if let Some(inputs) = exp.bound_inputs(config.epsilon.or(config.target_gap).unwrap_or(1e-3))
        {
            if let Ok(t_max) = bounds::t_upper_bound_convex(&inputs) {
                if config.t > t_max {
                    eprintln!(
                        "warning: probe length t={} exceeds the convex-theory bound {t_max:.3e}; \
                         proceeding anyway",
                        config.t
                    );
                }
            }
        }
    }
    let artifacts = experiment::run_experiment(config, &args.out)?;
    println!("wrote {}", artifacts.manifest_path.display());
    println!("wrote {}", artifacts.aggregate_path.display());
    for p in &artifacts.trace_paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> Result<(), ExperimentError> {
    let base = ExperimentConfig {
        problem: parse_enum::<ProblemKind>("problem", &args.problem.problem)?,
        data: args.problem.data.clone(),
        positive_class: args.problem.positive_class,
        dims: args.problem.dims,
        m: args.problem.m,
        n: args.problem.n,
        data_seed: args.problem.data_seed,
        reg_lambda: args.problem.reg_lambda,
        sampling: SamplingStrategy::Uniform,
        custom_p: None,
        stepsize: ScheduleSpec::Fixed,
        alpha0: None,
        epsilon: Some(args.epsilon),
        t: 1e-4,
        lambda: None,
        fstar: FStarSource::ExactSolve,
        fstar_value: None,
        iters: 1,
        seeds: 1,
        seed_base: 0,
        stride: 1,
        x0: X0Spec::Zeros,
        target_gap: None,
        eval_budget: None,
        record_grad: false,
        transform: TransformSpec::None,
        transform_seed: 0,
        estimate_l: false,
        refit_period: 0,
    };
    println!(
        "{:<10} {:>16} {:>16} {:>16} {:>16} {:>12}",
        "sampling", "nonconvex-decay", "nonconvex-fixed", "convex", "strongly-convex", "t-max"
    );
    for strategy in [
        SamplingStrategy::Uniform,
        SamplingStrategy::SqrtL,
        SamplingStrategy::L,
    ] {
        let mut config = base.clone();
        config.sampling = strategy;
        let exp = resolve(config)?;
        let inputs = exp.bound_inputs(args.epsilon).ok_or_else(|| {
            ExperimentError::Config("bounds need a known f*; use a ridge problem".to_string())
        })?;
        let report = bound_report(&inputs);
        let fixed = match report.k_nonconvex_fixed {
            Some(k) => format!("{k:.4e}"),
            None => "infeasible".to_string(),
        };
        let fmt = |x: Option<f64>| x.map(|k| format!("{k:.4e}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<10} {:>16} {:>16} {:>16} {:>16} {:>12}",
            format!("{:?}", strategy).to_lowercase(),
            format!("{:.4e}", report.k_nonconvex_decay),
            fixed,
            fmt(report.k_convex),
            fmt(report.k_strongly_convex),
            fmt(report.t_upper_bound_convex),
        );
    }
    println!(
        "note: strongly-convex counts use K = max_i(v_i/p_i)/lambda * log(2 r0 / epsilon); \
         the factor 2 inside the log follows the guarantee that halves the target gap."
    );
    Ok(())
}

fn cmd_parse(args: ParseArgs) -> Result<(), ExperimentError> {
    let file = fs::File::open(&args.file).map_err(|e| ExperimentError::Data(e.to_string()))?;
    let ds = libsvm::parse_libsvm_with_dims(BufReader::new(file), args.dims)
        .map_err(|e| ExperimentError::Data(e.to_string()))?;
    if ds.sort_warnings > 0 {
        eprintln!(
            "warning: {} row(s) had unsorted feature indices and were reordered",
            ds.sort_warnings
        );
    }
    println!(
        "rows: {}  cols: {}  nnz: {}",
        ds.x.rows(),
        ds.x.cols(),
        ds.x.nnz()
    );
    if let Some(out) = &args.out {
        let mut file =
            fs::File::create(out).map_err(|e| ExperimentError::Data(e.to_string()))?;
        libsvm::write_libsvm(&ds, &mut file).map_err(|e| ExperimentError::Data(e.to_string()))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), ExperimentError> {
    let report = experiment::compare_report(&args.dir_a, &args.dir_b)?;
    match &args.out {
        Some(path) => {
            let mut file =
                fs::File::create(path).map_err(|e| ExperimentError::Data(e.to_string()))?;
            file.write_all(report.as_bytes())
                .map_err(|e| ExperimentError::Data(e.to_string()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{report}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Parse(args) => cmd_parse(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
