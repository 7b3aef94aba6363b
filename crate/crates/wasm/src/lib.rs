//! Browser bindings for the n-step TD toolkit.
//!
//! Every export takes plain scalars and strings and returns a JSON document,
//! so the page needs no generated glue beyond `wasm-bindgen` itself. The
//! `*_json` functions are ordinary Rust and are tested natively.

use nalgebra::DVector;
use ntd_core::harness::problem::{parse_problem_json, resolve_builtin};
use ntd_core::operators::{horizon_record_at, smallest_contracting_n};
use ntd_core::solvers::certify_step_size;
use ntd_core::stochastic::StochConfig;
use ntd_core::{
    contraction_horizon, fixed_point, gradient_descent_run, hurwitz_horizon, npvi_run, projection,
    run_stochastic, system_iteration_run, true_solution, Algorithm, EvaluationSetup, IterTrace,
    ObjectiveKind, StepSizeSchedule,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest horizon the horizon curve will scan.
pub const MAX_CURVE_N: usize = 500;
/// Largest iteration budget accepted from the page.
pub const MAX_ITERS: usize = 1_000_000;
/// Points kept per plotted series.
pub const MAX_POINTS: usize = 400;

/// Builtin id or an inline problem JSON document.
pub fn resolve(problem: &str) -> Result<EvaluationSetup, String> {
    let text = problem.trim();
    let setup = if text.starts_with('{') {
        parse_problem_json(text)
    } else {
        resolve_builtin(text)
    };
    setup.map_err(|e| e.to_string())
}

fn check_iters(iters: usize) -> Result<(), String> {
    if iters == 0 || iters > MAX_ITERS {
        return Err(format!("iterations must be in 1..={MAX_ITERS}"));
    }
    Ok(())
}

/// Indices of at most `MAX_POINTS` evenly spread entries, always keeping the last.
fn thin(len: usize) -> Vec<usize> {
    if len <= MAX_POINTS {
        return (0..len).collect();
    }
    let step = len.div_ceil(MAX_POINTS);
    let mut idx: Vec<usize> = (0..len).step_by(step).collect();
    if idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

#[derive(Serialize)]
struct CurvePoint {
    n: usize,
    contraction_bound: f64,
    sym_part_max_eigenvalue: f64,
    /// `‖Φθ*^n − Φθ*^∞‖∞`; absent when `A_n` is singular.
    actual_gap: Option<f64>,
    /// Absent below the contraction horizon.
    bound_gap: Option<f64>,
}

#[derive(Serialize)]
struct Curve {
    gamma: f64,
    num_states: usize,
    num_features: usize,
    pi_inf_norm: f64,
    n_star: usize,
    smallest_contracting_n: usize,
    n_bar_star: Option<usize>,
    points: Vec<CurvePoint>,
}

/// Per-horizon contraction bound, Hurwitz margin and fixed-point gap for
/// `n = 1..=n_max`.
pub fn horizon_curve_json(problem: &str, n_max: usize) -> Result<String, String> {
    if n_max == 0 || n_max > MAX_CURVE_N {
        return Err(format!("n_max must be in 1..={MAX_CURVE_N}"));
    }
    let setup = resolve(problem)?;
    let err = |e: ntd_core::Error| e.to_string();
    let proj = projection(&setup).map_err(err)?;
    let n_star = contraction_horizon(&setup).map_err(err)?;
    let report = hurwitz_horizon(&setup, n_max).map_err(err)?;
    let (v_pi, theta_inf) = true_solution(&setup).map_err(err)?;
    let value_inf = setup.phi() * &theta_inf;
    let projected_error = (&proj.pi_matrix * &v_pi - &v_pi).amax();
    let mut points = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let record = horizon_record_at(&setup, n).map_err(err)?;
        let actual_gap = fixed_point(&setup, n)
            .ok()
            .map(|theta| (setup.phi() * theta - &value_inf).amax());
        let q = record.contraction_bound;
        let bound_gap = (n >= n_star && q < 1.0).then(|| q * projected_error / (1.0 - q));
        points.push(CurvePoint {
            n,
            contraction_bound: q,
            sym_part_max_eigenvalue: record.sym_part_max_eigenvalue,
            actual_gap,
            bound_gap,
        });
    }
    let curve = Curve {
        gamma: setup.gamma,
        num_states: setup.num_states(),
        num_features: setup.num_features(),
        pi_inf_norm: proj.inf_norm,
        n_star,
        smallest_contracting_n: smallest_contracting_n(proj.inf_norm, setup.gamma),
        n_bar_star: report.n_bar_star,
        points,
    };
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Series {
    algorithm: String,
    iter: Vec<usize>,
    residual_inf: Vec<f64>,
    dist_to_fixed_point: Vec<f64>,
    converged: bool,
    diverged: bool,
    iterations_used: usize,
    step_size: Option<f64>,
}

impl Series {
    fn from_trace(trace: &IterTrace) -> Self {
        let idx = thin(trace.residual_inf.len());
        Self {
            algorithm: trace.algorithm.clone(),
            iter: idx.clone(),
            residual_inf: idx.iter().map(|&i| trace.residual_inf[i]).collect(),
            dist_to_fixed_point: idx.iter().map(|&i| trace.dist_to_fixed_point[i]).collect(),
            converged: trace.converged,
            diverged: trace.diverged,
            iterations_used: trace.iterations_used,
            step_size: trace.step_size,
        }
    }
}

#[derive(Serialize)]
struct SolverRuns {
    n: usize,
    series: Vec<Series>,
    /// Why a solver was skipped, e.g. no certified step for SYSTEM.
    skipped: Vec<String>,
}

/// Runs the four model-based solvers at horizon `n` from `θ0 = theta0·1`.
pub fn solver_traces_json(
    problem: &str,
    n: usize,
    theta0: f64,
    max_iters: usize,
) -> Result<String, String> {
    check_iters(max_iters)?;
    if n == 0 {
        return Err("n must be at least 1".into());
    }
    let setup = resolve(problem)?;
    let start = DVector::from_element(setup.num_features(), theta0);
    let tol = ntd_core::solvers::DEFAULT_TOL;
    let mut series = Vec::new();
    let mut skipped = Vec::new();
    let mut push = |name: &str, run: ntd_core::Result<IterTrace>| match run {
        Ok(trace) => series.push(Series::from_trace(&trace)),
        Err(e) => skipped.push(format!("{name}: {e}")),
    };
    push("NPVI", npvi_run(&setup, n, &start, max_iters, tol));
    push(
        "GD_I",
        gradient_descent_run(&setup, n, ObjectiveKind::MspbeI, &start, max_iters, tol),
    );
    push(
        "GD_II",
        gradient_descent_run(
            &setup,
            n,
            ObjectiveKind::CompositeII,
            &start,
            max_iters,
            tol,
        ),
    );
    match certify_step_size(&setup, n) {
        Ok(Some(cert)) => push(
            "SYSTEM",
            system_iteration_run(&setup, n, cert.alpha, &start, max_iters, tol),
        ),
        Ok(None) => skipped.push("SYSTEM: B_n is not Hurwitz, no certified step".into()),
        Err(e) => skipped.push(format!("SYSTEM: {e}")),
    }
    serde_json::to_string(&SolverRuns { n, series, skipped }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct StochRun {
    algorithm: &'static str,
    n: usize,
    seed: u64,
    diverged: bool,
    iterations_run: usize,
    theta_star_n: Option<Vec<f64>>,
    iter: Vec<usize>,
    theta: Vec<Vec<f64>>,
    lambda: Option<Vec<Vec<f64>>>,
    dist_to_theta_star_n: Vec<f64>,
}

/// Seeded n-TD (`algo = "NTD"`) or n-GTD (`"NGTD"`) run under the schedule
/// `α_i = a / (b + i)^c`, given as `"a,b,c"`.
pub fn stochastic_run_json(
    problem: &str,
    algo: &str,
    n: usize,
    iters: usize,
    seed: u64,
    schedule: &str,
    theta0: f64,
) -> Result<String, String> {
    check_iters(iters)?;
    let algorithm = match algo.to_ascii_uppercase().as_str() {
        "NTD" => Algorithm::Ntd,
        "NGTD" => Algorithm::Ngtd,
        other => return Err(format!("unknown stochastic algorithm '{other}'")),
    };
    let setup = resolve(problem)?;
    let mut config = StochConfig::new(n, algorithm, iters, seed);
    config.schedule = StepSizeSchedule::parse(schedule).map_err(|e| e.to_string())?;
    config.log_every = iters.div_ceil(MAX_POINTS).max(1);
    config.theta0 = Some(DVector::from_element(setup.num_features(), theta0));
    let trace = run_stochastic(&setup, &config).map_err(|e| e.to_string())?;
    let records = &trace.records;
    let run = StochRun {
        algorithm: algorithm.name(),
        n,
        seed,
        diverged: trace.diverged,
        iterations_run: trace.iterations_run,
        theta_star_n: trace.theta_star_n.as_ref().map(|t| t.as_slice().to_vec()),
        iter: records.iter().map(|r| r.iter).collect(),
        theta: records
            .iter()
            .map(|r| r.theta.as_slice().to_vec())
            .collect(),
        lambda: (algorithm == Algorithm::Ngtd).then(|| {
            records
                .iter()
                .map(|r| {
                    r.lambda
                        .as_ref()
                        .map_or_else(Vec::new, |l| l.as_slice().to_vec())
                })
                .collect()
        }),
        dist_to_theta_star_n: records.iter().map(|r| r.dist_to_theta_star_n).collect(),
    };
    serde_json::to_string(&run).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn horizon_curve(problem: &str, n_max: usize) -> Result<String, JsValue> {
    horizon_curve_json(problem, n_max).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn solver_traces(
    problem: &str,
    n: usize,
    theta0: f64,
    max_iters: usize,
) -> Result<String, JsValue> {
    solver_traces_json(problem, n, theta0, max_iters).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn stochastic_run(
    problem: &str,
    algo: &str,
    n: usize,
    iters: usize,
    seed: u32,
    schedule: &str,
    theta0: f64,
) -> Result<String, JsValue> {
    stochastic_run_json(problem, algo, n, iters, seed as u64, schedule, theta0)
        .map_err(|e| JsValue::from_str(&e))
}
