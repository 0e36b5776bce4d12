//! Derivative-free optimization via stochastic three-point coordinate
//! search with importance sampling, plus the problem suite, data I/O and
//! theory calculators used by the `stpis` benchmark CLI.

pub mod bounds;
pub mod experiment;
pub mod libsvm;
pub mod lipschitz;
pub mod numerics;
pub mod objective;
pub mod optimizer;
pub mod problems;
pub mod rng;
pub mod sampler;
pub mod stepsize;

pub use bounds::BoundInputs;
pub use numerics::{DenseMatrix, DenseVector, SparseMatrix};
pub use objective::{CoordinateSmoothness, Function, Objective};
pub use optimizer::{stp_is_multi, stp_is_run, RunConfig, RunTrace, X0Spec};
pub use problems::{generate_synthetic, RidgeProblem, SquaredSvmProblem, SyntheticSpec};
pub use rng::SeededRng;
pub use sampler::{CoordinateSampler, SamplingStrategy};
pub use stepsize::StepSizeSchedule;
