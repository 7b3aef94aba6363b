//! Multi-step off-policy temporal-difference policy evaluation for finite MDPs.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`] builds the evaluation problem: the target-policy kernel
//!   `(P^π, R^π)`, the feature matrix `Φ` and the behaviour weighting `d^β`.
//! * [`operators`] holds the projection `Π`, the n-step Bellman operator,
//!   the contraction and Hurwitz horizons, closed-form solutions and error
//!   bounds.
//! * [`solvers`] runs the model-based iterations: projected value iteration,
//!   gradient descent on two objectives, and the Richardson system iteration.
//! * [`stochastic`] contains the sampling oracle, n-step TD and n-step GTD,
//!   and an exhaustive expectation oracle tying them back to the model-based
//!   dynamics.
//! * [`harness`] loads problems, emits CSV/JSON reports and drives sweeps.

// `!(x <= limit)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the matrix notation of the kernels
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod harness;
pub mod linalg;
pub mod mdp;
pub mod operators;
pub mod solvers;
pub mod stochastic;

pub use error::{Error, Result};
pub use mdp::{
    build_setup, policy_kernel, stationary_distribution, EvaluationSetup, FeatureMap, FiniteMdp,
    Policy, PolicyKernel,
};
pub use operators::{
    bellman_n, contraction_horizon, error_bounds, fixed_point, hurwitz_horizon, projection,
    true_solution, HorizonReport, NStepModel, ProjectionData, SolutionReport,
};
pub use solvers::{
    curvature, gradient_descent_run, npvi_run, objective_value_and_gradient, schur_certificate,
    system_iteration_run, CurvatureReport, IterTrace, ObjectiveKind,
};
pub use stochastic::{
    expected_update, ngtd_step, ntd_step, run_stochastic, sample_trajectory, Algorithm,
    StepSizeSchedule, StochTrace, TrajectorySample,
};

/// Version string embedded in every emitted artifact.
pub const TOOL_VERSION: &str = concat!("ntd-core ", env!("CARGO_PKG_VERSION"));
