//! The `analyze`, `run` and `sweep` drivers behind the command-line tool.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::output::{iter_trace_csv, stoch_trace_csv, write_atomic};
use crate::harness::problem::ProblemSpec;
use crate::linalg;
use crate::operators::{
    error_bounds, fixed_point, horizon_record_at, hurwitz_horizon, HorizonRecord, NStepModel,
    SolutionReport,
};
use crate::solvers::{
    certify_step_size, curvature, gradient_descent_run, npvi_run, schur_certificate,
    system_iteration_run, IterTrace, ObjectiveKind, SchurCertificate, StepCertificate,
    DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use crate::stochastic::{run_stochastic, Algorithm, StepSizeSchedule, StochConfig, StochTrace};
use crate::TOOL_VERSION;

/// Stochastic runs count as converged when the final distance to `θ*^n` is
/// within this fraction of `max(1, ‖θ*^n‖)`.
pub const STOCHASTIC_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RunAlgorithm {
    #[serde(rename = "NPVI")]
    Npvi,
    #[serde(rename = "GD_I")]
    GdI,
    #[serde(rename = "GD_II")]
    GdII,
    #[serde(rename = "SYSTEM")]
    System,
    #[serde(rename = "NTD")]
    Ntd,
    #[serde(rename = "NGTD")]
    Ngtd,
}

impl RunAlgorithm {
    pub const ALL: [RunAlgorithm; 6] = [
        RunAlgorithm::Npvi,
        RunAlgorithm::GdI,
        RunAlgorithm::GdII,
        RunAlgorithm::System,
        RunAlgorithm::Ntd,
        RunAlgorithm::Ngtd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunAlgorithm::Npvi => "NPVI",
            RunAlgorithm::GdI => "GD_I",
            RunAlgorithm::GdII => "GD_II",
            RunAlgorithm::System => "SYSTEM",
            RunAlgorithm::Ntd => "NTD",
            RunAlgorithm::Ngtd => "NGTD",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, RunAlgorithm::Ntd | RunAlgorithm::Ngtd)
    }

    fn index(self) -> u64 {
        Self::ALL.iter().position(|a| *a == self).unwrap() as u64
    }
}

impl FromStr for RunAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|a| a.name() == upper)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown algorithm '{s}' (expected one of NPVI, GD_I, GD_II, SYSTEM, NTD, NGTD)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    Diverged,
    NotConverged,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Converged => "converged",
            Verdict::Diverged => "diverged",
            Verdict::NotConverged => "not_converged",
        }
    }
}

/// Options shared by `run` and every cell of a `sweep`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Fixed step for SYSTEM; certified when absent.
    pub alpha: Option<f64>,
    pub schedule: StepSizeSchedule,
    /// Stochastic iterations.
    pub iters: usize,
    pub seed: u64,
    pub stream: u64,
    pub log_every: usize,
    /// Initial parameter; a single value is broadcast to every feature.
    pub theta0: Option<Vec<f64>>,
    /// Iteration cap for the deterministic solvers.
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            alpha: None,
            schedule: StepSizeSchedule::default(),
            iters: 200_000,
            seed: 0,
            stream: 0,
            log_every: 1000,
            theta0: None,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

fn initial_theta(opts: &RunOptions, m: usize) -> Result<DVector<f64>> {
    match &opts.theta0 {
        None => Ok(DVector::zeros(m)),
        Some(v) if v.len() == 1 => Ok(DVector::from_element(m, v[0])),
        Some(v) if v.len() == m => Ok(DVector::from_vec(v.clone())),
        Some(v) => Err(Error::config(format!(
            "theta0 has {} entries, expected 1 or {m}",
            v.len()
        ))),
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::config("n must be a positive integer"));
    }
    Ok(())
}

/// Outcome of one run; `csv` holds the trace serialised with metadata.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub algorithm: RunAlgorithm,
    pub n: usize,
    pub seed: Option<u64>,
    pub verdict: Verdict,
    pub iterations: usize,
    /// `‖Φθ − ΠT^n(Φθ)‖∞` for deterministic solvers.
    pub final_residual: Option<f64>,
    /// Distance to `θ*^n`; NaN (serialised as null) when it does not exist.
    pub final_distance: f64,
    pub step_size: Option<f64>,
    pub step_certified: Option<bool>,
    pub mu: Option<f64>,
    pub lip: Option<f64>,
    #[serde(skip)]
    pub csv: String,
}

fn meta(problem: &ProblemSpec) -> Vec<(&'static str, String)> {
    vec![
        ("tool_version", TOOL_VERSION.to_string()),
        ("problem", problem.name.clone()),
        ("problem_hash", problem.hash.clone()),
    ]
}

fn deterministic_outcome(
    problem: &ProblemSpec,
    algorithm: RunAlgorithm,
    trace: IterTrace,
    mut extra: Vec<(&'static str, String)>,
) -> RunOutcome {
    let verdict = if trace.diverged {
        Verdict::Diverged
    } else if trace.converged {
        Verdict::Converged
    } else {
        Verdict::NotConverged
    };
    let mut header = meta(problem);
    header.push(("algorithm", algorithm.name().to_string()));
    header.push(("n", trace.n.to_string()));
    if let Some(a) = trace.step_size {
        header.push(("step_size", format!("{a:e}")));
    }
    header.append(&mut extra);
    RunOutcome {
        algorithm,
        n: trace.n,
        seed: None,
        verdict,
        iterations: trace.iterations_used,
        final_residual: Some(trace.final_residual()),
        final_distance: trace.final_distance(),
        step_size: trace.step_size,
        step_certified: None,
        mu: None,
        lip: None,
        csv: iter_trace_csv(&trace, &header),
    }
}

fn stochastic_outcome(
    problem: &ProblemSpec,
    algorithm: RunAlgorithm,
    trace: StochTrace,
) -> RunOutcome {
    let last = trace.final_record();
    let verdict = if trace.diverged {
        Verdict::Diverged
    } else {
        match &trace.theta_star_n {
            Some(star) => {
                let scale = 1f64.max(star.norm());
                let lambda_ok = last
                    .lambda
                    .as_ref()
                    .is_none_or(|l| l.norm() <= STOCHASTIC_TOL * scale);
                if last.dist_to_theta_star_n <= STOCHASTIC_TOL * scale && lambda_ok {
                    Verdict::Converged
                } else {
                    Verdict::NotConverged
                }
            }
            None => Verdict::NotConverged,
        }
    };
    RunOutcome {
        algorithm,
        n: trace.n,
        seed: Some(trace.seed),
        verdict,
        iterations: trace.iterations_run,
        final_residual: None,
        final_distance: last.dist_to_theta_star_n,
        step_size: None,
        step_certified: None,
        mu: None,
        lip: None,
        csv: stoch_trace_csv(&trace, &meta(problem)),
    }
}

/// Runs one algorithm at one horizon. Mathematical divergence is reported in
/// the verdict; only invalid configurations are errors.
pub fn cmd_run(
    problem: &ProblemSpec,
    algorithm: RunAlgorithm,
    n: usize,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    check_n(n)?;
    let setup = &problem.resolved;
    let theta0 = initial_theta(opts, setup.num_features())?;
    match algorithm {
        RunAlgorithm::Npvi => {
            let trace = npvi_run(setup, n, &theta0, opts.max_iters, opts.tol)?;
            Ok(deterministic_outcome(problem, algorithm, trace, Vec::new()))
        }
        RunAlgorithm::GdI | RunAlgorithm::GdII => {
            let kind = if algorithm == RunAlgorithm::GdI {
                ObjectiveKind::MspbeI
            } else {
                ObjectiveKind::CompositeII
            };
            let curv = curvature(setup, n, kind)?;
            let trace = gradient_descent_run(setup, n, kind, &theta0, opts.max_iters, opts.tol)?;
            let extra = vec![
                ("objective", kind.name().to_string()),
                ("mu", format!("{:e}", curv.mu)),
                ("lipschitz", format!("{:e}", curv.lip)),
            ];
            let mut out = deterministic_outcome(problem, algorithm, trace, extra);
            out.mu = Some(curv.mu);
            out.lip = Some(curv.lip);
            Ok(out)
        }
        RunAlgorithm::System => {
            let (alpha, certified) = match opts.alpha {
                Some(a) => (a, schur_certificate(setup, n, a)?.stable),
                None => match certify_step_size(setup, n)? {
                    Some(cert) => (cert.alpha, true),
                    None => {
                        let b = NStepModel::new(setup, n)?.b_matrix();
                        (
                            1.0 / linalg::spectral_norm(&b).max(f64::MIN_POSITIVE),
                            false,
                        )
                    }
                },
            };
            let trace = system_iteration_run(setup, n, alpha, &theta0, opts.max_iters, opts.tol)?;
            let extra = vec![("schur_certified", certified.to_string())];
            let mut out = deterministic_outcome(problem, algorithm, trace, extra);
            out.step_certified = Some(certified);
            Ok(out)
        }
        RunAlgorithm::Ntd | RunAlgorithm::Ngtd => {
            let algo = if algorithm == RunAlgorithm::Ntd {
                Algorithm::Ntd
            } else {
                Algorithm::Ngtd
            };
            let config = StochConfig {
                schedule: opts.schedule,
                stream: opts.stream,
                log_every: opts.log_every,
                theta0: Some(theta0),
                ..StochConfig::new(n, algo, opts.iters, opts.seed)
            };
            let trace = run_stochastic(setup, &config)?;
            Ok(stochastic_outcome(problem, algorithm, trace))
        }
    }
}

/// Per-horizon entry of an [`AnalyzeReport`].
#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeEntry {
    pub n: usize,
    pub certificates: HorizonRecord,
    pub theta_star_n: Option<Vec<f64>>,
    pub fixed_point_error: Option<String>,
    /// Present for `n ≥ n*`.
    pub solution: Option<SolutionReport>,
    pub solution_error: Option<String>,
    /// Certified system-iteration step size when `B_n` is Hurwitz.
    pub certified_step: Option<StepCertificate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub tool_version: String,
    pub problem: String,
    pub problem_hash: String,
    pub gamma: f64,
    pub num_states: usize,
    pub num_features: usize,
    pub pi_inf_norm: f64,
    pub n_star: usize,
    pub smallest_contracting_n: usize,
    pub n_bar_star: Option<usize>,
    pub n_max: usize,
    /// Whether the symmetric part of `B_1` fails to be negative definite,
    /// i.e. one-step TD lacks the stability certificate.
    pub one_step_flagged: bool,
    pub entries: Vec<AnalyzeEntry>,
}

/// Horizon and solution analysis at `n ∈ {1, n*, n̄*} ∪ extras`. Singular
/// systems are reported per entry instead of failing the command.
pub fn cmd_analyze(problem: &ProblemSpec, n_max: usize, extras: &[usize]) -> Result<AnalyzeReport> {
    if n_max == 0 {
        return Err(Error::config("n_max must be positive"));
    }
    for &n in extras {
        check_n(n)?;
    }
    let setup = &problem.resolved;
    let horizon = hurwitz_horizon(setup, n_max)?;
    let mut ns = vec![1, horizon.n_star];
    ns.extend(horizon.n_bar_star);
    ns.extend_from_slice(extras);
    ns.sort_unstable();
    ns.dedup();

    let mut entries = Vec::with_capacity(ns.len());
    for n in ns {
        let certificates = match horizon.record(n) {
            Some(r) => r.clone(),
            None => horizon_record_at(setup, n)?,
        };
        let (theta_star_n, fixed_point_error) = match fixed_point(setup, n) {
            Ok(t) => (Some(linalg::to_vec(&t)), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let (solution, solution_error) = if n >= horizon.n_star {
            match error_bounds(setup, n) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            }
        } else {
            (None, None)
        };
        if certificates.contraction_bound < 1.0 && !certificates.a_n_nonsingular {
            return Err(Error::Invariant(format!(
                "n = {n}: contraction factor {} < 1 but A_n is singular",
                certificates.contraction_bound
            )));
        }
        let certified_step = certify_step_size(setup, n)?;
        entries.push(AnalyzeEntry {
            n,
            certificates,
            theta_star_n,
            fixed_point_error,
            solution,
            solution_error,
            certified_step,
        });
    }
    let one_step_flagged = entries[0].certificates.sym_part_max_eigenvalue >= 0.0;
    Ok(AnalyzeReport {
        tool_version: TOOL_VERSION.to_string(),
        problem: problem.name.clone(),
        problem_hash: problem.hash.clone(),
        gamma: setup.gamma,
        num_states: setup.num_states(),
        num_features: setup.num_features(),
        pi_inf_norm: horizon.pi_inf_norm,
        n_star: horizon.n_star,
        smallest_contracting_n: horizon.smallest_contracting_n,
        n_bar_star: horizon.n_bar_star,
        n_max,
        one_step_flagged,
        entries,
    })
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub algorithms: Vec<RunAlgorithm>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub jobs: usize,
    /// Template for every cell; `seed` and `stream` are overridden.
    pub options: RunOptions,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::config("sweep needs at least one n value"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("sweep needs at least one algorithm"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("sweep needs at least one seed"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs must be at least 1"));
        }
        for &n in &self.n_values {
            check_n(n)?;
        }
        Ok(())
    }
}

/// Model-level certificates for one horizon.
#[derive(Debug, Clone, Serialize)]
pub struct HorizonCertificates {
    pub n: usize,
    /// `γ^n ‖Π‖∞`
    pub contraction_factor: f64,
    pub sym_part_max_eigenvalue: f64,
    pub theta_star_n: Option<Vec<f64>>,
    pub certified_step: Option<StepCertificate>,
    /// `ρ(I + αB_n)` at the user-supplied `α`, if any.
    pub schur_at_alpha: Option<SchurCertificate>,
    pub mu_i: Option<f64>,
    pub lip_i: Option<f64>,
    pub mu_ii: Option<f64>,
    pub lip_ii: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub algorithm: RunAlgorithm,
    pub n: usize,
    pub seed: Option<u64>,
    pub csv: Option<String>,
    pub verdict: Option<Verdict>,
    pub final_distance: Option<f64>,
    pub final_residual: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub tool_version: String,
    pub problem: String,
    pub problem_hash: String,
    pub n_values: Vec<usize>,
    pub algorithms: Vec<RunAlgorithm>,
    pub seeds: Vec<u64>,
    pub schedule: StepSizeSchedule,
    pub iters: usize,
    pub alpha: Option<f64>,
    pub theta0: Option<Vec<f64>>,
    pub certificates: Vec<HorizonCertificates>,
    pub cells: Vec<SweepCell>,
}

pub const SUMMARY_FILE: &str = "summary.json";

fn horizon_certificates(
    problem: &ProblemSpec,
    n: usize,
    alpha: Option<f64>,
) -> HorizonCertificates {
    let setup = &problem.resolved;
    let mut errors = Vec::new();
    fn keep<T>(errors: &mut Vec<String>, r: Result<T>) -> Option<T> {
        r.map_err(|e| errors.push(e.to_string())).ok()
    }
    let record = keep(&mut errors, horizon_record_at(setup, n));
    let theta_star_n = keep(&mut errors, fixed_point(setup, n)).map(|t| linalg::to_vec(&t));
    let certified_step = keep(&mut errors, certify_step_size(setup, n)).flatten();
    let schur_at_alpha = alpha.and_then(|a| keep(&mut errors, schur_certificate(setup, n, a)));
    let c1 = keep(&mut errors, curvature(setup, n, ObjectiveKind::MspbeI));
    let c2 = keep(&mut errors, curvature(setup, n, ObjectiveKind::CompositeII));
    HorizonCertificates {
        n,
        contraction_factor: record.as_ref().map_or(f64::NAN, |r| r.contraction_bound),
        sym_part_max_eigenvalue: record
            .as_ref()
            .map_or(f64::NAN, |r| r.sym_part_max_eigenvalue),
        theta_star_n,
        certified_step,
        schur_at_alpha,
        mu_i: c1.as_ref().map(|c| c.mu),
        lip_i: c1.as_ref().map(|c| c.lip),
        mu_ii: c2.as_ref().map(|c| c.mu),
        lip_ii: c2.as_ref().map(|c| c.lip),
        errors,
    }
}

fn cell_file(algorithm: RunAlgorithm, n: usize, seed: Option<u64>) -> String {
    match seed {
        Some(s) => format!("{}_n{n}_seed{s}.csv", algorithm.name()),
        None => format!("{}_n{n}.csv", algorithm.name()),
    }
}

fn run_cell(
    problem: &ProblemSpec,
    config: &SweepConfig,
    algorithm: RunAlgorithm,
    n: usize,
    seed: Option<u64>,
) -> SweepCell {
    let mut opts = config.options.clone();
    if let Some(s) = seed {
        opts.seed = s;
        opts.stream = (algorithm.index() << 32) | n as u64;
    }
    let file = cell_file(algorithm, n, seed);
    let result = cmd_run(problem, algorithm, n, &opts).and_then(|out| {
        write_atomic(&config.output_dir.join(&file), out.csv.as_bytes())?;
        Ok(out)
    });
    match result {
        Ok(out) => SweepCell {
            algorithm,
            n,
            seed,
            csv: Some(file),
            verdict: Some(out.verdict),
            final_distance: Some(out.final_distance),
            final_residual: out.final_residual,
            iterations: Some(out.iterations),
            error: None,
        },
        Err(e) => SweepCell {
            algorithm,
            n,
            seed,
            csv: None,
            verdict: None,
            final_distance: None,
            final_residual: None,
            iterations: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every `(algorithm, n, seed)` cell in parallel and writes one CSV per
/// cell plus `summary.json`. Deterministic algorithms ignore the seed and run
/// once per `n`. Cell failures are recorded, not propagated.
pub fn cmd_sweep(problem: &ProblemSpec, config: &SweepConfig) -> Result<SweepSummary> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    check_writable(&config.output_dir)?;

    let mut cells = Vec::new();
    for &algorithm in &config.algorithms {
        for &n in &config.n_values {
            if algorithm.is_stochastic() {
                cells.extend(config.seeds.iter().map(|&s| (algorithm, n, Some(s))));
            } else {
                cells.push((algorithm, n, None));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let (certificates, results) = pool.install(|| {
        let certs: Vec<_> = config
            .n_values
            .par_iter()
            .map(|&n| horizon_certificates(problem, n, config.options.alpha))
            .collect();
        let results: Vec<_> = cells
            .par_iter()
            .map(|&(a, n, s)| run_cell(problem, config, a, n, s))
            .collect();
        (certs, results)
    });

    let summary = SweepSummary {
        tool_version: TOOL_VERSION.to_string(),
        problem: problem.name.clone(),
        problem_hash: problem.hash.clone(),
        n_values: config.n_values.clone(),
        algorithms: config.algorithms.clone(),
        seeds: config.seeds.clone(),
        schedule: config.options.schedule,
        iters: config.options.iters,
        alpha: config.options.alpha,
        theta0: config.options.theta0.clone(),
        certificates,
        cells: results,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    write_atomic(&config.output_dir.join(SUMMARY_FILE), json.as_bytes())?;
    Ok(summary)
}

fn check_writable(dir: &Path) -> Result<()> {
    let probe = dir.join(format!(".write-probe-{}", std::process::id()));
    std::fs::write(&probe, b"")
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| {
            Error::config(format!(
                "output directory {} is not writable: {e}",
                dir.display()
            ))
        })
}
