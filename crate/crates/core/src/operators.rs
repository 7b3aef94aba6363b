//! Projection, n-step Bellman operator, horizon certificates, closed-form
//! solutions and the value/gap error bounds.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::EvaluationSetup;

/// Default search limit for the Hurwitz horizon.
pub const DEFAULT_N_MAX: usize = 10_000;

/// Slack when checking certified inequalities.
const BOUND_SLACK: f64 = 1e-9;

/// `Π = Φ (Φ^T D Φ)^{-1} Φ^T D` together with the Gram inverse and `‖Π‖∞`.
#[derive(Debug, Clone)]
pub struct ProjectionData {
    pub pi_matrix: DMatrix<f64>,
    pub gram_inverse: DMatrix<f64>,
    pub inf_norm: f64,
}

pub fn projection(setup: &EvaluationSetup) -> Result<ProjectionData> {
    let gram_inverse = linalg::inverse_guarded(&setup.gram()).map_err(|e| match e {
        Error::Singular { condition } => Error::RankDeficient { condition },
        other => other,
    })?;
    let pi_matrix = setup.phi() * &gram_inverse * setup.phi_t_d();
    let inf_norm = linalg::inf_norm(&pi_matrix);
    Ok(ProjectionData {
        pi_matrix,
        gram_inverse,
        inf_norm,
    })
}

/// `T^n(x)` by `n` applications of the one-step map `y ↦ R^π + γ P^π y`.
pub fn bellman_n(setup: &EvaluationSetup, n: usize, x: &DVector<f64>) -> DVector<f64> {
    assert!(n >= 1, "bellman_n requires n >= 1");
    assert_eq!(x.len(), setup.num_states(), "state vector has wrong length");
    let mut y = x.clone();
    for _ in 0..n {
        y = setup.r_pi() + setup.p_pi() * &y * setup.gamma;
    }
    y
}

/// `⌈ln(‖Π‖∞^{-1}) / ln γ⌉ + 1` when `‖Π‖∞ ≥ 1`, otherwise 1.
pub fn contraction_horizon_from(pi_inf_norm: f64, gamma: f64) -> usize {
    if pi_inf_norm < 1.0 {
        return 1;
    }
    let raw = (1.0 / pi_inf_norm).ln() / gamma.ln();
    // ‖Π‖∞ = 1 comes out as 1 ± ulp for exact projections
    let ceil = (raw - 1e-9).ceil().max(0.0);
    ceil as usize + 1
}

pub fn contraction_horizon(setup: &EvaluationSetup) -> Result<usize> {
    let proj = projection(setup)?;
    Ok(contraction_horizon_from(proj.inf_norm, setup.gamma))
}

/// Smallest `n ≥ 1` with `γ^n ‖Π‖∞ < 1`; the closed-form horizon may exceed it.
pub fn smallest_contracting_n(pi_inf_norm: f64, gamma: f64) -> usize {
    let mut n = 1;
    while gamma.powi(n as i32) * pi_inf_norm >= 1.0 {
        n += 1;
    }
    n
}

/// The affine form of `T^n`: `T^n(x) = reward_sum + discounted_power · x`,
/// with `discounted_power = γ^n (P^π)^n` and
/// `reward_sum = Σ_{k<n} γ^k (P^π)^k R^π`.
#[derive(Debug, Clone)]
pub struct NStepModel {
    pub n: usize,
    pub discounted_power: DMatrix<f64>,
    pub reward_sum: DVector<f64>,
    /// `A_n = Φ^T D (I − γ^n (P^π)^n) Φ`.
    pub a_n: DMatrix<f64>,
    /// `b_n = Φ^T D reward_sum`.
    pub b_n: DVector<f64>,
    /// `‖Φ^T D Φ‖₂`, the reference scale for singularity of `A_n`.
    pub scale: f64,
}

impl NStepModel {
    pub fn new(setup: &EvaluationSetup, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("horizon n must be at least 1"));
        }
        let mut powers = PowerSequence::new(setup);
        let mut reward_sum = DVector::zeros(setup.num_states());
        for _ in 0..n {
            reward_sum += powers.discounted() * setup.r_pi();
            powers.advance()?;
        }
        Ok(Self::assemble(setup, n, powers.discounted(), reward_sum))
    }

    fn assemble(
        setup: &EvaluationSetup,
        n: usize,
        discounted_power: DMatrix<f64>,
        reward_sum: DVector<f64>,
    ) -> Self {
        let phi_t_d = setup.phi_t_d();
        let ns = setup.num_states();
        let a_n = &phi_t_d * (DMatrix::identity(ns, ns) - &discounted_power) * setup.phi();
        let b_n = &phi_t_d * &reward_sum;
        let scale = linalg::spectral_norm(&setup.gram());
        Self {
            n,
            discounted_power,
            reward_sum,
            a_n,
            b_n,
            scale,
        }
    }

    /// `T^n(x)` through the precomputed affine form.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.reward_sum + &self.discounted_power * x
    }

    /// `B_n = Φ^T D (γ^n (P^π)^n − I) Φ = −A_n`.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        -&self.a_n
    }

    /// `Φ^T D (T^n(Φθ) − Φθ) = b_n − A_n θ`.
    pub fn feature_residual(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.b_n - &self.a_n * theta
    }
}

/// Iterates `γ^k (P^π)^k` by cumulative products, checking that the
/// undiscounted power stays row-stochastic and renormalising the rows.
struct PowerSequence<'a> {
    setup: &'a EvaluationSetup,
    power: DMatrix<f64>,
    discount: f64,
}

impl<'a> PowerSequence<'a> {
    fn new(setup: &'a EvaluationSetup) -> Self {
        let ns = setup.num_states();
        Self {
            setup,
            power: DMatrix::identity(ns, ns),
            discount: 1.0,
        }
    }

    fn discounted(&self) -> DMatrix<f64> {
        &self.power * self.discount
    }

    fn advance(&mut self) -> Result<()> {
        self.power = &self.power * self.setup.p_pi();
        for mut row in self.power.row_iter_mut() {
            let sum = row.sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Invariant(format!(
                    "power of P^π drifted off row-stochastic (row sum {sum})"
                )));
            }
            row /= sum;
        }
        self.discount *= self.setup.gamma;
        Ok(())
    }
}

/// Per-horizon certificate data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonRecord {
    pub n: usize,
    /// `γ^n ‖Π‖∞`.
    pub contraction_bound: f64,
    /// `λ_max(B_n + B_n^T)`.
    pub sym_part_max_eigenvalue: f64,
    pub a_n_nonsingular: bool,
    pub a_n_condition: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonReport {
    pub n_star: usize,
    /// Smallest `n` that actually satisfies `γ^n ‖Π‖∞ < 1`.
    pub smallest_contracting_n: usize,
    /// `None` when no Hurwitz certificate exists for `n ≤ n_max`.
    pub n_bar_star: Option<usize>,
    pub n_max: usize,
    pub pi_inf_norm: f64,
    pub per_n: Vec<HorizonRecord>,
}

impl HorizonReport {
    pub fn record(&self, n: usize) -> Option<&HorizonRecord> {
        self.per_n.iter().find(|r| r.n == n)
    }
}

fn horizon_record(
    setup: &EvaluationSetup,
    n: usize,
    discounted_power: &DMatrix<f64>,
    pi_inf_norm: f64,
) -> HorizonRecord {
    let ns = setup.num_states();
    let b = setup.phi_t_d() * (discounted_power - DMatrix::identity(ns, ns)) * setup.phi();
    let (_, sym_max) = linalg::sym_eigen_extremes(&(&b + b.transpose()));
    let cond = linalg::relative_condition(&b, linalg::spectral_norm(&setup.gram()));
    HorizonRecord {
        n,
        contraction_bound: discounted_power_scale(setup.gamma, n) * pi_inf_norm,
        sym_part_max_eigenvalue: sym_max,
        a_n_nonsingular: cond <= linalg::CONDITION_LIMIT,
        a_n_condition: cond,
    }
}

fn discounted_power_scale(gamma: f64, n: usize) -> f64 {
    gamma.powi(n as i32)
}

/// Scans `n = 1, 2, …, n_max` for the first horizon whose `B_n` has a
/// negative definite symmetric part. Records every scanned `n` up to
/// `max(n*, n̄*)`.
pub fn hurwitz_horizon(setup: &EvaluationSetup, n_max: usize) -> Result<HorizonReport> {
    if n_max == 0 {
        return Err(Error::config("n_max must be at least 1"));
    }
    let proj = projection(setup)?;
    let n_star = contraction_horizon_from(proj.inf_norm, setup.gamma);
    let mut powers = PowerSequence::new(setup);
    let mut per_n = Vec::new();
    let mut n_bar_star = None;
    for n in 1..=n_max {
        powers.advance()?;
        let rec = horizon_record(setup, n, &powers.discounted(), proj.inf_norm);
        if n_bar_star.is_none() && rec.sym_part_max_eigenvalue < 0.0 {
            n_bar_star = Some(n);
        }
        per_n.push(rec);
        if n_bar_star.is_some() && n >= n_star {
            break;
        }
    }
    Ok(HorizonReport {
        n_star,
        smallest_contracting_n: smallest_contracting_n(proj.inf_norm, setup.gamma),
        n_bar_star,
        n_max,
        pi_inf_norm: proj.inf_norm,
        per_n,
    })
}

/// Certificate data for a single horizon, without scanning.
pub fn horizon_record_at(setup: &EvaluationSetup, n: usize) -> Result<HorizonRecord> {
    let proj = projection(setup)?;
    let model = NStepModel::new(setup, n)?;
    Ok(horizon_record(
        setup,
        n,
        &model.discounted_power,
        proj.inf_norm,
    ))
}

/// `θ*^n = A_n^{-1} Φ^T D Σ_{k<n} γ^k (P^π)^k R^π`.
pub fn fixed_point(setup: &EvaluationSetup, n: usize) -> Result<DVector<f64>> {
    let model = NStepModel::new(setup, n)?;
    fixed_point_of(&model)
}

pub fn fixed_point_of(model: &NStepModel) -> Result<DVector<f64>> {
    linalg::solve_guarded_scaled(&model.a_n, &model.b_n, model.scale).map_err(|e| match e {
        Error::Singular { condition } => Error::NoUniqueFixedPoint {
            n: model.n,
            condition,
        },
        other => other,
    })
}

/// `V^π = (I − γ P^π)^{-1} R^π` and `θ*^∞ = (Φ^T D Φ)^{-1} Φ^T D V^π`.
pub fn true_solution(setup: &EvaluationSetup) -> Result<(DVector<f64>, DVector<f64>)> {
    let ns = setup.num_states();
    let system = DMatrix::identity(ns, ns) - setup.p_pi() * setup.gamma;
    let v_pi = system
        .lu()
        .solve(setup.r_pi())
        .ok_or_else(|| Error::Invariant("I - γP^π is singular".into()))?;
    let theta_inf = linalg::solve_guarded(&setup.gram(), &(setup.phi_t_d() * &v_pi))?;
    Ok((v_pi, theta_inf))
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub n: usize,
    pub theta_star_n: Vec<f64>,
    pub theta_star_inf: Vec<f64>,
    pub v_pi: Vec<f64>,
    /// `‖ΠV^π − V^π‖∞ / (1 − γ^n ‖Π‖∞)`.
    pub bound_value: f64,
    /// `γ^n ‖Π‖∞ · bound_value`.
    pub bound_gap: f64,
    /// `‖Φθ*^n − V^π‖∞`.
    pub actual_value_error: f64,
    /// `‖Φθ*^n − Φθ*^∞‖∞`.
    pub actual_gap: f64,
}

pub fn error_bounds(setup: &EvaluationSetup, n: usize) -> Result<SolutionReport> {
    let proj = projection(setup)?;
    let required = contraction_horizon_from(proj.inf_norm, setup.gamma);
    if n < required {
        return Err(Error::BelowHorizon { n, required });
    }
    let factor = discounted_power_scale(setup.gamma, n) * proj.inf_norm;
    let theta_n = fixed_point(setup, n)?;
    let (v_pi, theta_inf) = true_solution(setup)?;
    let approx_n = setup.phi() * &theta_n;
    let projection_error = linalg::vec_inf(&(&proj.pi_matrix * &v_pi - &v_pi));
    let bound_value = projection_error / (1.0 - factor);
    let bound_gap = factor * bound_value;
    let actual_value_error = linalg::vec_inf(&(&approx_n - &v_pi));
    let actual_gap = linalg::vec_inf(&(&approx_n - setup.phi() * &theta_inf));

    let scale = 1.0_f64.max(linalg::vec_inf(&v_pi));
    if actual_value_error > bound_value + BOUND_SLACK * scale {
        return Err(Error::Invariant(format!(
            "value error {actual_value_error:.6e} exceeds bound {bound_value:.6e} at n = {n}"
        )));
    }
    if actual_gap > bound_gap + BOUND_SLACK * scale {
        return Err(Error::Invariant(format!(
            "gap {actual_gap:.6e} exceeds bound {bound_gap:.6e} at n = {n}"
        )));
    }
    Ok(SolutionReport {
        n,
        theta_star_n: linalg::to_vec(&theta_n),
        theta_star_inf: linalg::to_vec(&theta_inf),
        v_pi: linalg::to_vec(&v_pi),
        bound_value,
        bound_gap,
        actual_value_error,
        actual_gap,
    })
}
