//! Problem ingestion, canned problems, experiment drivers and report output.

pub mod builtins;
pub mod commands;
pub mod output;
pub mod problem;

pub use commands::{
    cmd_analyze, cmd_run, cmd_sweep, AnalyzeReport, RunAlgorithm, RunOptions, RunOutcome,
    SweepConfig, SweepSummary, Verdict,
};
pub use problem::{load_problem, ProblemSource, ProblemSpec};
