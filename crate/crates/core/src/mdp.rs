//! Finite MDPs, policies, features, and the evaluation setup consumed by every
//! other module.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on probability row sums.
pub const PROB_TOL: f64 = 1e-9;

/// Relative singular-value threshold for the full-column-rank check on `Φ`.
pub const RANK_TOL: f64 = 1e-10;

const STATIONARY_MAX_ITERS: usize = 100_000;
const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_RESIDUAL: f64 = 1e-10;
/// States with less stationary mass than this are treated as transient.
const STATIONARY_MIN_MASS: f64 = 1e-9;

/// Tabular MDP with deterministic rewards `r(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    num_states: usize,
    num_actions: usize,
    // transition[a][(s, s')]
    transition: Vec<DMatrix<f64>>,
    reward: Vec<DMatrix<f64>>,
    gamma: f64,
}

impl FiniteMdp {
    /// Builds an MDP from nested `[s][a][s']` arrays.
    pub fn new(transition: &[Vec<Vec<f64>>], reward: &[Vec<Vec<f64>>], gamma: f64) -> Result<Self> {
        let num_states = transition.len();
        if num_states == 0 {
            return Err(Error::config("num_states must be positive"));
        }
        let num_actions = transition[0].len();
        if num_actions == 0 {
            return Err(Error::config("num_actions must be positive"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::config(format!("gamma = {gamma} is not in (0, 1)")));
        }
        if reward.len() != num_states {
            return Err(Error::config(format!(
                "reward has {} states, transition has {num_states}",
                reward.len()
            )));
        }
        let mut p = vec![DMatrix::zeros(num_states, num_states); num_actions];
        let mut r = vec![DMatrix::zeros(num_states, num_states); num_actions];
        for s in 0..num_states {
            if transition[s].len() != num_actions || reward[s].len() != num_actions {
                return Err(Error::config(format!(
                    "state {s}: expected {num_actions} actions in transition and reward"
                )));
            }
            for a in 0..num_actions {
                let row = &transition[s][a];
                let rew = &reward[s][a];
                if row.len() != num_states || rew.len() != num_states {
                    return Err(Error::config(format!(
                        "(s={s}, a={a}): expected {num_states} next-state entries"
                    )));
                }
                check_distribution(row, || format!("transition row (s={s}, a={a})"))?;
                for (next, (&prob, &rv)) in row.iter().zip(rew).enumerate() {
                    if !rv.is_finite() {
                        return Err(Error::config(format!(
                            "reward (s={s}, a={a}, s'={next}) is not finite"
                        )));
                    }
                    p[a][(s, next)] = prob;
                    r[a][(s, next)] = rv;
                }
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            transition: p,
            reward: r,
            gamma,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `P(s' | s, a)`.
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[a][(s, next)]
    }

    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward[a][(s, next)]
    }

    /// Next-state distribution for `(s, a)` as a slice-like row.
    pub fn next_state_probs(&self, s: usize, a: usize) -> Vec<f64> {
        self.transition[a].row(s).iter().copied().collect()
    }

    /// A copy of this MDP with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::config(format!("gamma = {gamma} is not in (0, 1)")));
        }
        Ok(Self {
            gamma,
            ..self.clone()
        })
    }

    pub(crate) fn transition_nested(&self) -> Vec<Vec<Vec<f64>>> {
        self.nested(&self.transition)
    }

    pub(crate) fn reward_nested(&self) -> Vec<Vec<Vec<f64>>> {
        self.nested(&self.reward)
    }

    fn nested(&self, per_action: &[DMatrix<f64>]) -> Vec<Vec<Vec<f64>>> {
        (0..self.num_states)
            .map(|s| {
                per_action
                    .iter()
                    .map(|m| m.row(s).iter().copied().collect())
                    .collect()
            })
            .collect()
    }
}

fn check_distribution(row: &[f64], what: impl Fn() -> String) -> Result<()> {
    if let Some(bad) = row.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::config(format!("{} has invalid entry {bad}", what())));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::config(format!("{} sums to {sum}, not 1", what())));
    }
    Ok(())
}

/// Stochastic policy `π(a | s)` stored as an `|S| × |A|` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: DMatrix<f64>,
}

impl Policy {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(Error::config(
                "policy must have at least one state and action",
            ));
        }
        let mut probs = DMatrix::zeros(num_states, num_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::config(format!(
                    "policy row {s} has {} actions, expected {num_actions}",
                    row.len()
                )));
            }
            check_distribution(row, || format!("policy row s={s}"))?;
            for (a, &p) in row.iter().enumerate() {
                probs[(s, a)] = p;
            }
        }
        Ok(Self { probs })
    }

    /// Uniform over all actions in every state.
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            probs: DMatrix::from_element(num_states, num_actions, 1.0 / num_actions as f64),
        }
    }

    /// Point mass on `action` in every state.
    pub fn deterministic(num_states: usize, num_actions: usize, action: usize) -> Self {
        let mut probs = DMatrix::zeros(num_states, num_actions);
        for s in 0..num_states {
            probs[(s, action)] = 1.0;
        }
        Self { probs }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    pub fn num_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        linalg::rows_to_vec(&self.probs)
    }
}

/// `(P^π, R^π)` for a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyKernel {
    pub p_pi: DMatrix<f64>,
    pub r_pi: DVector<f64>,
}

/// Feature matrix `Φ` (`|S| × m`), full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    phi: DMatrix<f64>,
}

impl FeatureMap {
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = phi.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::config("feature matrix must be non-empty"));
        }
        if cols > rows {
            return Err(Error::config(format!(
                "feature matrix has m = {cols} columns for {rows} states (need m <= |S|)"
            )));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("feature matrix has non-finite entries"));
        }
        let sv = phi.singular_values();
        let (min, max) = (sv.min(), sv.max());
        if !(min > RANK_TOL * max) {
            return Err(Error::RankDeficient {
                condition: if min > 0.0 { max / min } else { f64::INFINITY },
            });
        }
        Ok(Self { phi })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_states = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::config("feature rows have inconsistent lengths"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(num_states, m, &flat))
    }

    pub fn identity(num_states: usize) -> Self {
        Self {
            phi: DMatrix::identity(num_states, num_states),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn num_features(&self) -> usize {
        self.phi.ncols()
    }

    /// `φ(s)` as a column vector.
    pub fn row(&self, s: usize) -> DVector<f64> {
        self.phi.row(s).transpose()
    }
}

/// Everything the evaluation equations consume: `(P^π, R^π, Φ, d^β, γ)` plus
/// the originating MDP and policy pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSetup {
    pub kernel_target: PolicyKernel,
    pub features: FeatureMap,
    pub d_beta: DVector<f64>,
    pub gamma: f64,
    pub target_policy: Policy,
    pub behavior_policy: Policy,
    pub base_mdp: FiniteMdp,
}

impl EvaluationSetup {
    pub fn num_states(&self) -> usize {
        self.base_mdp.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.base_mdp.num_actions()
    }

    pub fn num_features(&self) -> usize {
        self.features.num_features()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        self.features.matrix()
    }

    pub fn p_pi(&self) -> &DMatrix<f64> {
        &self.kernel_target.p_pi
    }

    pub fn r_pi(&self) -> &DVector<f64> {
        &self.kernel_target.r_pi
    }

    /// `Φ^T D^β`, an `m × |S|` matrix.
    pub fn phi_t_d(&self) -> DMatrix<f64> {
        let mut out = self.phi().transpose();
        for (s, mut col) in out.column_iter_mut().enumerate() {
            col *= self.d_beta[s];
        }
        out
    }

    /// Gram matrix `Φ^T D^β Φ`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.phi_t_d() * self.phi()
    }

    /// The same problem with `γ` replaced (kernel is γ-independent).
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Ok(Self {
            base_mdp: self.base_mdp.with_gamma(gamma)?,
            gamma,
            ..self.clone()
        })
    }

    /// Serialisable problem file reproducing this setup exactly.
    pub fn to_problem_file(&self) -> ProblemFile {
        ProblemFile {
            num_states: self.num_states(),
            num_actions: self.num_actions(),
            transition: self.base_mdp.transition_nested(),
            reward: self.base_mdp.reward_nested(),
            gamma: self.gamma,
            pi: self.target_policy.rows(),
            beta: self.behavior_policy.rows(),
            phi: linalg::rows_to_vec(self.phi()),
            d_beta: Some(linalg::to_vec(&self.d_beta)),
        }
    }
}

/// JSON problem schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
    pub pi: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_beta: Option<Vec<f64>>,
}

impl ProblemFile {
    pub fn resolve(&self) -> Result<EvaluationSetup> {
        if self.transition.len() != self.num_states {
            return Err(Error::config(format!(
                "num_states = {} but transition has {} rows",
                self.num_states,
                self.transition.len()
            )));
        }
        if self.transition.iter().any(|r| r.len() != self.num_actions) {
            return Err(Error::config(format!(
                "num_actions = {} does not match transition",
                self.num_actions
            )));
        }
        let mdp = FiniteMdp::new(&self.transition, &self.reward, self.gamma)?;
        let pi = Policy::new(&self.pi)?;
        let beta = Policy::new(&self.beta)?;
        let phi = FeatureMap::from_rows(&self.phi)?;
        let d = self.d_beta.as_ref().map(|d| DVector::from_vec(d.clone()));
        build_setup(&mdp, &pi, &beta, &phi, d)
    }
}

fn check_policy_shape(mdp: &FiniteMdp, policy: &Policy) -> Result<()> {
    if policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions() {
        return Err(Error::config(format!(
            "policy is {}x{}, MDP has {} states and {} actions",
            policy.num_states(),
            policy.num_actions(),
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    Ok(())
}

/// `P^π(s, s') = Σ_a π(a|s) P(s'|s,a)` and
/// `R^π(s) = Σ_a π(a|s) Σ_{s'} P(s'|s,a) r(s,a,s')`.
pub fn policy_kernel(mdp: &FiniteMdp, policy: &Policy) -> Result<PolicyKernel> {
    check_policy_shape(mdp, policy)?;
    let n = mdp.num_states();
    let mut p_pi = DMatrix::zeros(n, n);
    let mut r_pi = DVector::zeros(n);
    for s in 0..n {
        for a in 0..mdp.num_actions() {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for next in 0..n {
                let p = mdp.prob(s, a, next);
                p_pi[(s, next)] += w * p;
                r_pi[s] += w * p * mdp.reward(s, a, next);
            }
        }
    }
    Ok(PolicyKernel { p_pi, r_pi })
}

/// Stationary distribution of the chain induced by `policy`, via damped
/// left power iteration `d ← ½ d + ½ P^T d`. The damping makes periodic
/// chains converge to their (unique) stationary vector as well.
pub fn stationary_distribution(mdp: &FiniteMdp, policy: &Policy) -> Result<DVector<f64>> {
    let kernel = policy_kernel(mdp, policy)?;
    let p_t = kernel.p_pi.transpose();
    let n = mdp.num_states();
    let mut d = DVector::from_element(n, 1.0 / n as f64);
    let mut converged = false;
    for _ in 0..STATIONARY_MAX_ITERS {
        let mut next = (&d + &p_t * &d) * 0.5;
        let total = next.sum();
        next /= total;
        let step = linalg::vec_inf(&(&next - &d));
        d = next;
        if step <= STATIONARY_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotIrreducible(format!(
            "power iteration did not settle within {STATIONARY_MAX_ITERS} steps"
        )));
    }
    let residual = linalg::vec_inf(&(&p_t * &d - &d));
    if residual > STATIONARY_RESIDUAL {
        return Err(Error::NotIrreducible(format!("residual {residual:.3e}")));
    }
    if let Some((s, v)) = d
        .iter()
        .enumerate()
        .find(|(_, v)| **v <= STATIONARY_MIN_MASS)
    {
        return Err(Error::NotIrreducible(format!(
            "state {s} has weight {v:.3e}"
        )));
    }
    Ok(d)
}

/// Assembles and validates an [`EvaluationSetup`]. `d_beta` defaults to the
/// stationary distribution of the behaviour policy.
pub fn build_setup(
    mdp: &FiniteMdp,
    pi: &Policy,
    beta: &Policy,
    phi: &FeatureMap,
    d_beta_override: Option<DVector<f64>>,
) -> Result<EvaluationSetup> {
    check_policy_shape(mdp, pi)?;
    check_policy_shape(mdp, beta)?;
    if phi.matrix().nrows() != mdp.num_states() {
        return Err(Error::config(format!(
            "feature matrix has {} rows, MDP has {} states",
            phi.matrix().nrows(),
            mdp.num_states()
        )));
    }
    let d_beta = match d_beta_override {
        Some(d) => {
            if d.len() != mdp.num_states() {
                return Err(Error::config(format!(
                    "d_beta has {} entries, expected {}",
                    d.len(),
                    mdp.num_states()
                )));
            }
            if let Some((state, &value)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::NonPositiveWeight { state, value });
            }
            let total = d.sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::config(format!("d_beta sums to {total}, not 1")));
            }
            d
        }
        None => stationary_distribution(mdp, beta)?,
    };
    Ok(EvaluationSetup {
        kernel_target: policy_kernel(mdp, pi)?,
        features: phi.clone(),
        d_beta,
        gamma: mdp.gamma(),
        target_policy: pi.clone(),
        behavior_policy: beta.clone(),
        base_mdp: mdp.clone(),
    })
}
