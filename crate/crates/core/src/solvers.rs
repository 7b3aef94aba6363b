//! Model-based deterministic solvers: n-step projected value iteration,
//! gradient descent on the two quadratic objectives, and the Richardson
//! system iteration with its Schur certificate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::EvaluationSetup;
use crate::operators::{
    contraction_horizon_from, fixed_point_of, projection, NStepModel, ProjectionData,
};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100_000;
/// `‖θ‖∞` above which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e9;
/// Slack on per-iteration rate certificates.
pub const RATE_SLACK: f64 = 1e-9;
/// `ρ` must be below `1 − SCHUR_MARGIN` to count as Schur stable.
pub const SCHUR_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// `½‖ΠT^n(Φθ) − Φθ‖²_D`
    #[serde(rename = "MSPBE_I")]
    MspbeI,
    /// `½‖Φ^T D (T^n(Φθ) − Φθ)‖²_W` with `W = Φ^T D Φ`
    #[serde(rename = "COMPOSITE_II")]
    CompositeII,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::MspbeI => "MSPBE_I",
            ObjectiveKind::CompositeII => "COMPOSITE_II",
        }
    }
}

/// Everything the solvers need at one horizon.
struct Context<'a> {
    setup: &'a EvaluationSetup,
    model: NStepModel,
    proj: ProjectionData,
    phi_t_d: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl<'a> Context<'a> {
    fn new(setup: &'a EvaluationSetup, n: usize) -> Result<Self> {
        Ok(Self {
            setup,
            model: NStepModel::new(setup, n)?,
            proj: projection(setup)?,
            phi_t_d: setup.phi_t_d(),
            gram: setup.gram(),
        })
    }

    fn n_star(&self) -> usize {
        contraction_horizon_from(self.proj.inf_norm, self.setup.gamma)
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.setup.num_features() {
            return Err(Error::config(format!(
                "theta has length {}, expected {}",
                theta.len(),
                self.setup.num_features()
            )));
        }
        Ok(())
    }

    /// `‖Φθ − ΠT^n(Φθ)‖∞`.
    fn residual_inf(&self, theta: &DVector<f64>) -> f64 {
        let v = self.setup.phi() * theta;
        linalg::vec_inf(&(&v - &self.proj.pi_matrix * self.model.apply(&v)))
    }

    /// `Φ^T D (T^n(Φθ) − Φθ)`.
    fn feature_residual(&self, theta: &DVector<f64>) -> DVector<f64> {
        let v = self.setup.phi() * theta;
        &self.phi_t_d * (self.model.apply(&v) - v)
    }

    fn hessian(&self, kind: ObjectiveKind) -> Result<DMatrix<f64>> {
        let m = self.model.b_matrix();
        let weight = match kind {
            ObjectiveKind::MspbeI => self.proj.gram_inverse.clone(),
            ObjectiveKind::CompositeII => self.gram.clone(),
        };
        Ok(linalg::symmetrize(&(m.transpose() * weight * m)))
    }

    fn value_and_gradient(&self, kind: ObjectiveKind, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let m_t = self.model.b_matrix().transpose();
        match kind {
            ObjectiveKind::MspbeI => {
                let v = self.setup.phi() * theta;
                let r = &self.proj.pi_matrix * self.model.apply(&v) - v;
                let value = 0.5 * linalg::weighted_norm(&r, &self.setup.d_beta).powi(2);
                let grad = m_t * &self.proj.gram_inverse * (&self.phi_t_d * r);
                (value, grad)
            }
            ObjectiveKind::CompositeII => {
                let h = self.feature_residual(theta);
                let wh = &self.gram * &h;
                let value = 0.5 * h.dot(&wh);
                (value, m_t * wh)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    pub kind: ObjectiveKind,
    pub n: usize,
    #[serde(serialize_with = "serialize_matrix")]
    pub hessian: DMatrix<f64>,
    /// `λ_min(Γ)`, clamped at zero.
    pub mu: f64,
    /// `λ_max(Γ) = ‖Γ‖₂`.
    pub lip: f64,
    /// `2/(μ + L)` when `μ > 0`, else `1/L`.
    pub step_size: f64,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(linalg::rows_to_vec(m))
}

fn curvature_in(ctx: &Context, kind: ObjectiveKind) -> Result<CurvatureReport> {
    let hessian = ctx.hessian(kind)?;
    let (min, max) = linalg::sym_eigen_extremes(&hessian);
    let lip = max.max(0.0);
    // eigenvalues at rounding level, relative to L or to the natural scale
    // of Γ (‖G‖ for MSPBE_I, ‖G‖³ for COMPOSITE_II), count as zero
    let g = linalg::spectral_norm(&ctx.gram);
    let natural = match kind {
        ObjectiveKind::MspbeI => g,
        ObjectiveKind::CompositeII => g.powi(3),
    };
    let mu = if min > lip.max(natural) * 1e-14 {
        min
    } else {
        0.0
    };
    let step_size = if mu > 0.0 {
        2.0 / (mu + lip)
    } else if lip > 0.0 {
        1.0 / lip
    } else {
        1.0
    };
    Ok(CurvatureReport {
        kind,
        n: ctx.model.n,
        hessian,
        mu,
        lip,
        step_size,
    })
}

/// Hessian `Γ`, strong-convexity modulus and gradient Lipschitz constant.
pub fn curvature(
    setup: &EvaluationSetup,
    n: usize,
    kind: ObjectiveKind,
) -> Result<CurvatureReport> {
    curvature_in(&Context::new(setup, n)?, kind)
}

pub fn objective_value_and_gradient(
    setup: &EvaluationSetup,
    n: usize,
    kind: ObjectiveKind,
    theta: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let ctx = Context::new(setup, n)?;
    ctx.check_theta(theta)?;
    Ok(ctx.value_and_gradient(kind, theta))
}

/// Deterministic solver trace.
#[derive(Debug, Clone)]
pub struct IterTrace {
    pub algorithm: String,
    pub n: usize,
    pub thetas: Vec<DVector<f64>>,
    /// `‖Φθ_k − ΠT^n(Φθ_k)‖∞`.
    pub residual_inf: Vec<f64>,
    /// `‖θ_k − θ*^n‖₂`, NaN when no unique fixed point exists.
    pub dist_to_fixed_point: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub iterations_used: usize,
    pub step_size: Option<f64>,
}

impl IterTrace {
    pub fn final_theta(&self) -> &DVector<f64> {
        self.thetas.last().expect("trace has at least one iterate")
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual_inf.last().expect("non-empty trace")
    }

    pub fn final_distance(&self) -> f64 {
        *self.dist_to_fixed_point.last().expect("non-empty trace")
    }
}

#[allow(clippy::too_many_arguments)]
fn run_iteration(
    ctx: &Context,
    algorithm: &str,
    theta0: &DVector<f64>,
    max_iters: usize,
    tol: f64,
    step_size: Option<f64>,
    mut step: impl FnMut(&DVector<f64>) -> DVector<f64>,
    mut certify: impl FnMut(usize, &DVector<f64>) -> Result<()>,
) -> Result<IterTrace> {
    ctx.check_theta(theta0)?;
    let fixed = fixed_point_of(&ctx.model).ok();
    let distance = |theta: &DVector<f64>| match &fixed {
        Some(f) => (theta - f).norm(),
        None => f64::NAN,
    };
    let mut trace = IterTrace {
        algorithm: algorithm.to_string(),
        n: ctx.model.n,
        thetas: Vec::new(),
        residual_inf: Vec::new(),
        dist_to_fixed_point: Vec::new(),
        converged: false,
        diverged: false,
        iterations_used: 0,
        step_size,
    };
    let mut theta = theta0.clone();
    for k in 0..=max_iters {
        certify(k, &theta)?;
        let residual = ctx.residual_inf(&theta);
        trace.residual_inf.push(residual);
        trace.dist_to_fixed_point.push(distance(&theta));
        trace.thetas.push(theta.clone());
        trace.iterations_used = k;
        if residual <= tol {
            trace.converged = true;
            break;
        }
        let size = linalg::vec_inf(&theta);
        if !(size <= DIVERGENCE_LIMIT) {
            trace.diverged = true;
            break;
        }
        if k == max_iters {
            break;
        }
        theta = step(&theta);
    }
    Ok(trace)
}

/// `θ_{k+1} = (Φ^T D Φ)^{-1} Φ^T D T^n(Φθ_k)`. For `n ≥ n*` every iterate is
/// checked against `‖Φθ_k − Φθ*‖∞ ≤ (γ^n‖Π‖∞)^k ‖Φθ_0 − Φθ*‖∞`.
pub fn npvi_run(
    setup: &EvaluationSetup,
    n: usize,
    theta0: &DVector<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<IterTrace> {
    let ctx = Context::new(setup, n)?;
    let factor = setup.gamma.powi(n as i32) * ctx.proj.inf_norm;
    let fixed_values = if n >= ctx.n_star() {
        fixed_point_of(&ctx.model).ok().map(|f| setup.phi() * f)
    } else {
        None
    };
    let initial = fixed_values
        .as_ref()
        .map(|fv| linalg::vec_inf(&(setup.phi() * theta0 - fv)));
    let solve = &ctx.proj.gram_inverse * &ctx.phi_t_d;
    run_iteration(
        &ctx,
        "NPVI",
        theta0,
        max_iters,
        tol,
        None,
        |theta| &solve * ctx.model.apply(&(setup.phi() * theta)),
        |k, theta| {
            if let (Some(fv), Some(e0)) = (&fixed_values, initial) {
                let err = linalg::vec_inf(&(setup.phi() * theta - fv));
                let bound = factor.powi(k as i32) * e0;
                if err > bound + RATE_SLACK {
                    return Err(Error::Invariant(format!(
                        "n-PVI rate bound violated at k = {k}: {err:.6e} > {bound:.6e}"
                    )));
                }
            }
            Ok(())
        },
    )
}

/// Gradient descent `θ_{k+1} = θ_k − α∇f(θ_k)` with `α = 2/(μ + L)`. When
/// `μ > 0` the Nesterov bound `‖θ_k − θ*‖² ≤ ((L−μ)/(L+μ))^{2k} ‖θ_0 − θ*‖²`
/// is checked at every iterate; a violation aborts the run.
pub fn gradient_descent_run(
    setup: &EvaluationSetup,
    n: usize,
    kind: ObjectiveKind,
    theta0: &DVector<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<IterTrace> {
    let ctx = Context::new(setup, n)?;
    let curv = curvature_in(&ctx, kind)?;
    let alpha = curv.step_size;
    let fixed = if curv.mu > 0.0 {
        fixed_point_of(&ctx.model).ok()
    } else {
        None
    };
    let rate = (curv.lip - curv.mu) / (curv.lip + curv.mu);
    let initial = fixed.as_ref().map(|f| (theta0 - f).norm_squared());
    // the gradient is affine, ∇f(θ) = Γθ + ∇f(0)
    let grad_at_zero = ctx
        .value_and_gradient(kind, &DVector::zeros(setup.num_features()))
        .1;
    let name = match kind {
        ObjectiveKind::MspbeI => "GD_I",
        ObjectiveKind::CompositeII => "GD_II",
    };
    run_iteration(
        &ctx,
        name,
        theta0,
        max_iters,
        tol,
        Some(alpha),
        |theta| theta - (&curv.hessian * theta + &grad_at_zero) * alpha,
        |k, theta| {
            if let (Some(f), Some(e0)) = (&fixed, initial) {
                let err = (theta - f).norm_squared();
                let bound = rate.powi(2 * k as i32) * e0;
                if err > bound + RATE_SLACK {
                    return Err(Error::Invariant(format!(
                        "gradient descent rate bound violated at k = {k}: {err:.6e} > {bound:.6e}"
                    )));
                }
            }
            Ok(())
        },
    )
}

/// Richardson iteration `θ_{k+1} = θ_k + α Φ^T D (T^n(Φθ_k) − Φθ_k)`.
pub fn system_iteration_run(
    setup: &EvaluationSetup,
    n: usize,
    alpha: f64,
    theta0: &DVector<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<IterTrace> {
    if !(alpha > 0.0) {
        return Err(Error::config(format!(
            "step size alpha = {alpha} must be positive"
        )));
    }
    let ctx = Context::new(setup, n)?;
    run_iteration(
        &ctx,
        "SYSTEM",
        theta0,
        max_iters,
        tol,
        Some(alpha),
        |theta| theta + ctx.feature_residual(theta) * alpha,
        |_, _| Ok(()),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchurCertificate {
    pub alpha: f64,
    pub spectral_radius: f64,
    pub stable: bool,
}

/// `ρ(I + α B_n)` and whether it is below `1 − 1e-12`.
pub fn schur_certificate(
    setup: &EvaluationSetup,
    n: usize,
    alpha: f64,
) -> Result<SchurCertificate> {
    let model = NStepModel::new(setup, n)?;
    Ok(schur_of(&model.b_matrix(), alpha))
}

fn schur_of(b: &DMatrix<f64>, alpha: f64) -> SchurCertificate {
    let m = b.nrows();
    let a = DMatrix::identity(m, m) + b * alpha;
    let spectral_radius = linalg::spectral_radius(&a);
    SchurCertificate {
        alpha,
        spectral_radius,
        stable: spectral_radius < 1.0 - SCHUR_MARGIN,
    }
}

/// A step size for the system iteration with a Schur certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepCertificate {
    /// Step size minimising `ρ(I + αB_n)` inside the stable interval.
    pub alpha: f64,
    pub spectral_radius: f64,
    /// Upper end of the stable interval `(0, alpha_edge)`, found by bisection
    /// from the bracket `(0, 2/‖B_n‖₂]`, widened when needed.
    pub alpha_edge: f64,
}

/// Finds a certified step size when `B_n` is Hurwitz; `None` otherwise.
///
/// The stable set `{α > 0 : ρ(I + αB) < 1}` is an interval because each
/// `|1 + αλ|` is convex in `α`. Bisection locates its upper end, then a
/// golden-section search minimises the (convex) spectral radius inside it.
pub fn certify_step_size(setup: &EvaluationSetup, n: usize) -> Result<Option<StepCertificate>> {
    let model = NStepModel::new(setup, n)?;
    let b = model.b_matrix();
    let eig = linalg::eigenvalues(&b);
    if eig.iter().any(|(re, _)| *re >= 0.0) {
        return Ok(None);
    }
    let radius = |alpha: f64| {
        eig.iter()
            .map(|(re, im)| (1.0 + alpha * re).hypot(alpha * im))
            .fold(0.0, f64::max)
    };
    let stable = |alpha: f64| radius(alpha) < 1.0 - SCHUR_MARGIN;
    // 2/‖B‖₂ is a starting bracket only: for non-normal B the stable
    // interval can extend past it, so widen until unstable.
    let mut hi = 2.0 / linalg::spectral_norm(&b);
    let mut lo = 0.0;
    while stable(hi) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if stable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let edge = lo;
    if edge <= 0.0 {
        return Ok(None);
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, edge);
    for _ in 0..200 {
        let x1 = hi - inv_phi * (hi - lo);
        let x2 = lo + inv_phi * (hi - lo);
        if radius(x1) <= radius(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let cert = schur_of(&b, alpha);
    if !cert.stable {
        return Ok(None);
    }
    Ok(Some(StepCertificate {
        alpha,
        spectral_radius: cert.spectral_radius,
        alpha_edge: edge,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::builtins::{random_setup, twostate, RandomSpec};
    use crate::operators::{contraction_horizon, fixed_point, hurwitz_horizon};
    use approx::assert_abs_diff_eq;

    fn one(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    fn twostate_scalar(n: usize) -> f64 {
        3.0 * 0.99f64.powi(n as i32) - 2.5
    }

    #[test]
    fn npvi_from_fixed_point_stays_put() {
        let setup = random_setup(&RandomSpec::new(5, 2, 2, 1)).unwrap();
        let n = contraction_horizon(&setup).unwrap();
        let theta = fixed_point(&setup, n).unwrap();
        let trace = npvi_run(&setup, n, &theta, 10, 1e-10).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations_used, 0);
        assert!(trace.residual_inf[0] < 1e-10);
    }

    #[test]
    fn npvi_twostate_converges_at_horizon_and_diverges_at_one() {
        let setup = twostate();
        let trace = npvi_run(&setup, 20, &one(1.0), DEFAULT_MAX_ITERS, DEFAULT_TOL).unwrap();
        assert!(trace.converged);
        // scalar recursion θ ← 2γ^n·(Φ^T D [1,1]^T)/2.5 θ = (3γ^n/2.5)·... checked directly
        let factor = 0.99f64.powi(20) * 1.2;
        for (k, th) in trace.thetas.iter().enumerate() {
            assert!(th[0].abs() <= factor.powi(k as i32) + 1e-12);
            assert_abs_diff_eq!(th[0], factor.powi(k as i32), epsilon = 1e-12);
        }
        let trace = npvi_run(&setup, 1, &one(1.0), 10_000, DEFAULT_TOL).unwrap();
        assert!(!trace.converged && trace.diverged);
        assert!(trace.thetas[1][0] > 1.0);
    }

    #[test]
    fn twostate_curvature_is_scalar_square() {
        let c = curvature(&twostate(), 19, ObjectiveKind::MspbeI).unwrap();
        let expected = twostate_scalar(19).powi(2) / 2.5;
        assert_abs_diff_eq!(c.hessian[(0, 0)], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(c.mu, c.lip, epsilon = 1e-18);
        let c2 = curvature(&twostate(), 19, ObjectiveKind::CompositeII).unwrap();
        assert_abs_diff_eq!(
            c2.hessian[(0, 0)],
            twostate_scalar(19).powi(2) * 2.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn curvature_is_psd_for_small_n_and_pd_beyond_horizon() {
        for seed in 0..20 {
            let setup = random_setup(&RandomSpec::new(6, 2, 3, seed)).unwrap();
            let n_star = contraction_horizon(&setup).unwrap();
            for kind in [ObjectiveKind::MspbeI, ObjectiveKind::CompositeII] {
                let c = curvature(&setup, 1, kind).unwrap();
                let (min, _) = linalg::sym_eigen_extremes(&c.hessian);
                assert!(min >= -1e-10);
                assert!(curvature(&setup, n_star, kind).unwrap().mu > 0.0);
            }
        }
    }

    #[test]
    fn objectives_vanish_at_fixed_point() {
        let setup = random_setup(&RandomSpec::new(5, 3, 2, 12)).unwrap();
        let n = contraction_horizon(&setup).unwrap();
        let theta = fixed_point(&setup, n).unwrap();
        for kind in [ObjectiveKind::MspbeI, ObjectiveKind::CompositeII] {
            let (v, g) = objective_value_and_gradient(&setup, n, kind, &theta).unwrap();
            assert!(v.abs() < 1e-20 && g.norm() < 1e-10, "{v} {g}");
        }
        let (v, g) =
            objective_value_and_gradient(&twostate(), 3, ObjectiveKind::MspbeI, &one(0.0)).unwrap();
        assert_eq!((v, g[0]), (0.0, 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let setup = random_setup(&RandomSpec::new(6, 2, 3, 30)).unwrap();
        let theta = DVector::from_vec(vec![0.4, -1.2, 0.7]);
        let h = 1e-5;
        for kind in [ObjectiveKind::MspbeI, ObjectiveKind::CompositeII] {
            let (_, g) = objective_value_and_gradient(&setup, 3, kind, &theta).unwrap();
            let fd = DVector::from_fn(3, |i, _| {
                let mut p = theta.clone();
                let mut m = theta.clone();
                p[i] += h;
                m[i] -= h;
                let fp = objective_value_and_gradient(&setup, 3, kind, &p).unwrap().0;
                let fm = objective_value_and_gradient(&setup, 3, kind, &m).unwrap().0;
                (fp - fm) / (2.0 * h)
            });
            assert!((fd - &g).amax() / g.amax() < 1e-6);
        }
    }

    #[test]
    fn gd_from_fixed_point_stays_and_scalar_case_is_one_step() {
        let setup = twostate();
        let trace =
            gradient_descent_run(&setup, 19, ObjectiveKind::MspbeI, &one(1.0), 100, 1e-10).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations_used, 1);
        assert!(trace.thetas[1][0].abs() < 1e-12);

        let setup = random_setup(&RandomSpec::new(5, 2, 2, 2)).unwrap();
        let n = contraction_horizon(&setup).unwrap();
        let theta = fixed_point(&setup, n).unwrap();
        let trace = gradient_descent_run(&setup, n, ObjectiveKind::CompositeII, &theta, 100, 1e-10)
            .unwrap();
        assert_eq!(trace.iterations_used, 0);
    }

    #[test]
    fn gd_random_setup_reaches_fixed_point() {
        let setup = random_setup(&RandomSpec::new(5, 2, 2, 42)).unwrap();
        let n = contraction_horizon(&setup).unwrap();
        let expected = fixed_point(&setup, n).unwrap();
        for kind in [ObjectiveKind::MspbeI, ObjectiveKind::CompositeII] {
            let trace =
                gradient_descent_run(&setup, n, kind, &DVector::zeros(2), 1_000_000, DEFAULT_TOL)
                    .unwrap();
            assert!(trace.converged);
            assert!((trace.final_theta() - &expected).amax() < 1e-8);
        }
    }

    #[test]
    fn gd_runs_in_convex_mode_when_singular() {
        let setup = twostate().with_gamma(5.0 / 6.0).unwrap();
        let c = curvature(&setup, 1, ObjectiveKind::MspbeI).unwrap();
        assert_eq!(c.mu, 0.0);
        let trace =
            gradient_descent_run(&setup, 1, ObjectiveKind::MspbeI, &one(1.0), 10, 1e-10).unwrap();
        assert!(trace.dist_to_fixed_point[0].is_nan());
    }

    #[test]
    fn system_iteration_twostate() {
        let setup = twostate();
        let trace = system_iteration_run(&setup, 19, 0.1, &one(1.0), 5, 0.0).unwrap();
        let factor = 1.0 + 0.1 * twostate_scalar(19);
        assert!((factor - (1.0 - 0.00215)).abs() < 1e-5);
        for (k, th) in trace.thetas.iter().enumerate() {
            assert_abs_diff_eq!(th[0], factor.powi(k as i32), epsilon = 1e-14);
        }
        let trace = system_iteration_run(&setup, 1, 0.1, &one(1.0), 100_000, 1e-10).unwrap();
        assert!(trace.diverged);
        assert!(system_iteration_run(&setup, 1, 0.0, &one(1.0), 5, 0.0).is_err());
    }

    #[test]
    fn schur_certificate_examples() {
        let setup = twostate();
        let c = schur_certificate(&setup, 19, 0.0).unwrap();
        assert_eq!((c.spectral_radius, c.stable), (1.0, false));
        let c = schur_certificate(&setup, 19, 0.1).unwrap();
        assert!(c.stable);
        assert_abs_diff_eq!(
            c.spectral_radius,
            1.0 + 0.1 * twostate_scalar(19),
            epsilon = 1e-14
        );
        assert!(!schur_certificate(&setup, 1, 0.1).unwrap().stable);
    }

    #[test]
    fn certified_step_exists_beyond_hurwitz_horizon() {
        for seed in 0..20 {
            let setup = random_setup(&RandomSpec::new(6, 2, 3, seed)).unwrap();
            let report = hurwitz_horizon(&setup, 10_000).unwrap();
            let n = report.n_bar_star.unwrap();
            let cert = certify_step_size(&setup, n)
                .unwrap()
                .expect("certified alpha");
            assert!(cert.alpha > 0.0 && cert.alpha < cert.alpha_edge);
            assert!(schur_certificate(&setup, n, cert.alpha).unwrap().stable);
        }
        assert!(certify_step_size(&twostate(), 1).unwrap().is_none());
    }

    #[test]
    fn certified_edge_is_the_stability_boundary() {
        let setup = crate::harness::builtins::baird_star();
        let n = hurwitz_horizon(&setup, 1000).unwrap().n_bar_star.unwrap();
        let cert = certify_step_size(&setup, n).unwrap().unwrap();
        assert!(cert.alpha < cert.alpha_edge);
        let at_edge = schur_certificate(&setup, n, cert.alpha_edge).unwrap();
        let past = schur_certificate(&setup, n, cert.alpha_edge * (1.0 + 1e-9)).unwrap();
        assert!(at_edge.spectral_radius > 1.0 - 1e-6);
        assert!(!past.stable);
        for f in [0.5, 0.9, 1.1, 1.5] {
            let other = schur_certificate(&setup, n, cert.alpha * f).unwrap();
            assert!(other.spectral_radius >= cert.spectral_radius - 1e-12);
        }
    }
}
