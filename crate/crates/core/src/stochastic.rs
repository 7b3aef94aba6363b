//! Model-free n-step TD and n-step GTD with importance sampling, the i.i.d.
//! restart sampling oracle, and an exhaustive expectation oracle.

use nalgebra::DVector;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::EvaluationSetup;
use crate::operators::fixed_point;
use crate::solvers::DIVERGENCE_LIMIT;

/// Identifies the random stream algorithm in emitted traces.
pub const RNG_ID: &str = "chacha8/rand_chacha-0.3/seed_from_u64+stream;weighted_index/rand-0.8";

/// Maximum number of `|S|·|A|^n` paths [`expected_update`] will enumerate.
pub const ENUMERATION_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "NTD")]
    Ntd,
    #[serde(rename = "NGTD")]
    Ngtd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ntd => "NTD",
            Algorithm::Ngtd => "NGTD",
        }
    }
}

/// One draw from the sampling oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    /// `s_0 … s_n`
    pub states: Vec<usize>,
    /// `a_0 … a_{n−1}`
    pub actions: Vec<usize>,
    /// `r_1 … r_n` with `r_{k+1} = r(s_k, a_k, s_{k+1})`
    pub rewards: Vec<f64>,
    /// `Π_k π(a_k|s_k) / β(a_k|s_k)`
    pub rho: f64,
}

impl TrajectorySample {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// Robbins–Monro schedule `α_i = a / (b + i)^c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeSchedule {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for StepSizeSchedule {
    fn default() -> Self {
        Self {
            a: 0.5,
            b: 1000.0,
            c: 1.0,
        }
    }
}

impl StepSizeSchedule {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let s = Self { a, b, c };
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::config(format!(
                "schedule needs a > 0 and b > 0 (got {a}, {b})"
            )));
        }
        if !s.is_robbins_monro() {
            return Err(Error::config(format!(
                "schedule exponent c = {c} must lie in (0.5, 1]"
            )));
        }
        Ok(s)
    }

    /// Parses `"a,b,c"`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<f64> = text
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::config(format!("schedule '{text}' is not 'a,b,c'")))?;
        match parts.as_slice() {
            [a, b, c] => Self::new(*a, *b, *c),
            _ => Err(Error::config(format!("schedule '{text}' is not 'a,b,c'"))),
        }
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.a / (self.b + i as f64).powf(self.c)
    }

    /// `Σ α_i` diverges iff `c ≤ 1`; `Σ α_i²` converges iff `2c > 1`.
    pub fn is_robbins_monro(&self) -> bool {
        self.sum_diverges() && self.square_sum_converges()
    }

    pub fn sum_diverges(&self) -> bool {
        self.c <= 1.0
    }

    pub fn square_sum_converges(&self) -> bool {
        2.0 * self.c > 1.0
    }
}

/// Precomputed sampling tables for the behaviour policy.
pub struct Sampler<'a> {
    setup: &'a EvaluationSetup,
    start: WeightedIndex<f64>,
    behavior: Vec<WeightedIndex<f64>>,
    // next[s * |A| + a]; None when the row is never reachable by β
    next: Vec<Option<WeightedIndex<f64>>>,
}

fn weighted(weights: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| Error::config(format!("sampling table: {e}")))
}

/// `β(a|s) > 0` wherever `π(a|s) > 0`.
pub fn check_support(setup: &EvaluationSetup) -> Result<()> {
    for s in 0..setup.num_states() {
        for a in 0..setup.num_actions() {
            let p = setup.target_policy.prob(s, a);
            let b = setup.behavior_policy.prob(s, a);
            if p > 0.0 && b <= 0.0 {
                return Err(Error::config(format!(
                    "behaviour policy has no support for (s={s}, a={a}) where π = {p}"
                )));
            }
        }
    }
    Ok(())
}

impl<'a> Sampler<'a> {
    pub fn new(setup: &'a EvaluationSetup) -> Result<Self> {
        check_support(setup)?;
        let na = setup.num_actions();
        let mut behavior = Vec::with_capacity(setup.num_states());
        let mut next = Vec::with_capacity(setup.num_states() * na);
        for s in 0..setup.num_states() {
            let row: Vec<f64> = (0..na).map(|a| setup.behavior_policy.prob(s, a)).collect();
            behavior.push(weighted(&row)?);
            for a in 0..na {
                next.push(if row[a] > 0.0 {
                    Some(weighted(&setup.base_mdp.next_state_probs(s, a))?)
                } else {
                    None
                });
            }
        }
        Ok(Self {
            setup,
            start: weighted(setup.d_beta.as_slice())?,
            behavior,
            next,
        })
    }

    /// `s_0 ~ d^β`, then `a_k ~ β(·|s_k)`, `s_{k+1} ~ P(·|s_k, a_k)`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> TrajectorySample {
        let na = self.setup.num_actions();
        let mdp = &self.setup.base_mdp;
        let mut s = self.start.sample(rng);
        let mut states = Vec::with_capacity(n + 1);
        let mut actions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        let mut rho = 1.0;
        states.push(s);
        for _ in 0..n {
            let a = self.behavior[s].sample(rng);
            let next = self.next[s * na + a]
                .as_ref()
                .expect("sampled action has behaviour support")
                .sample(rng);
            rho *= self.setup.target_policy.prob(s, a) / self.setup.behavior_policy.prob(s, a);
            rewards.push(mdp.reward(s, a, next));
            actions.push(a);
            states.push(next);
            s = next;
        }
        TrajectorySample {
            states,
            actions,
            rewards,
            rho,
        }
    }
}

pub fn sample_trajectory<R: Rng + ?Sized>(
    setup: &EvaluationSetup,
    n: usize,
    rng: &mut R,
) -> Result<TrajectorySample> {
    if n == 0 {
        return Err(Error::config("horizon n must be at least 1"));
    }
    Ok(Sampler::new(setup)?.sample(n, rng))
}

/// `G = Σ_{k<n} γ^k r_{k+1} + γ^n φ(s_n)^T θ`.
fn n_step_return(setup: &EvaluationSetup, theta: &DVector<f64>, sample: &TrajectorySample) -> f64 {
    let gamma = setup.gamma;
    let mut discount = 1.0;
    let mut g = 0.0;
    for r in &sample.rewards {
        g += discount * r;
        discount *= gamma;
    }
    let last = *sample.states.last().expect("non-empty path");
    g + discount * setup.phi().row(last).dot(&theta.transpose())
}

fn feature_dot(setup: &EvaluationSetup, s: usize, v: &DVector<f64>) -> f64 {
    setup.phi().row(s).dot(&v.transpose())
}

/// n-step TD update `θ + α ρ (G − φ(s_0)^T θ) φ(s_0)`.
pub fn ntd_step(
    setup: &EvaluationSetup,
    theta: &DVector<f64>,
    sample: &TrajectorySample,
    alpha: f64,
) -> DVector<f64> {
    if sample.rho == 0.0 {
        return theta.clone();
    }
    let s0 = sample.states[0];
    let td = n_step_return(setup, theta, sample) - feature_dot(setup, s0, theta);
    theta + setup.features.row(s0) * (alpha * sample.rho * td)
}

/// n-step GTD primal-dual update:
/// `θ' = θ + α ρ (φ(s_0) − γ^n φ(s_n)) φ(s_0)^T λ`,
/// `λ' = λ + α ρ (G − φ(s_0)^T θ − φ(s_0)^T λ) φ(s_0)`.
pub fn ngtd_step(
    setup: &EvaluationSetup,
    theta: &DVector<f64>,
    lambda: &DVector<f64>,
    sample: &TrajectorySample,
    alpha: f64,
) -> (DVector<f64>, DVector<f64>) {
    if sample.rho == 0.0 {
        return (theta.clone(), lambda.clone());
    }
    let n = sample.horizon();
    let s0 = sample.states[0];
    let sn = *sample.states.last().expect("non-empty path");
    let phi0 = setup.features.row(s0);
    let dual = feature_dot(setup, s0, lambda);
    let scale = alpha * sample.rho;
    let direction = &phi0 - setup.features.row(sn) * setup.gamma.powi(n as i32);
    let new_theta = theta + direction * (scale * dual);
    let td = n_step_return(setup, theta, sample) - feature_dot(setup, s0, theta) - dual;
    let new_lambda = lambda + phi0 * (scale * td);
    (new_theta, new_lambda)
}

/// Configuration of one seeded stochastic run.
#[derive(Debug, Clone, PartialEq)]
pub struct StochConfig {
    pub n: usize,
    pub algorithm: Algorithm,
    pub schedule: StepSizeSchedule,
    pub iters: usize,
    pub seed: u64,
    /// Stream index within the seed; distinct runs of one sweep use
    /// distinct streams.
    pub stream: u64,
    pub log_every: usize,
    pub theta0: Option<DVector<f64>>,
    pub lambda0: Option<DVector<f64>>,
}

impl StochConfig {
    pub fn new(n: usize, algorithm: Algorithm, iters: usize, seed: u64) -> Self {
        Self {
            n,
            algorithm,
            schedule: StepSizeSchedule::default(),
            iters,
            seed,
            stream: 0,
            log_every: 1000,
            theta0: None,
            lambda0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochRecord {
    pub iter: usize,
    pub theta: DVector<f64>,
    pub lambda: Option<DVector<f64>>,
    /// `‖θ_i − θ*^n‖₂`, NaN when the fixed point does not exist.
    pub dist_to_theta_star_n: f64,
}

/// Logged iterates of a stochastic run; records at `i = 0`, every
/// `log_every` iterations, and at the final iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct StochTrace {
    pub seed: u64,
    pub stream: u64,
    pub algorithm: Algorithm,
    pub n: usize,
    pub schedule: StepSizeSchedule,
    pub log_every: usize,
    pub iterations_run: usize,
    pub records: Vec<StochRecord>,
    pub diverged: bool,
    pub theta_star_n: Option<DVector<f64>>,
}

impl StochTrace {
    pub fn final_record(&self) -> &StochRecord {
        self.records.last().expect("trace has at least one record")
    }
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs n-TD or n-GTD with a fresh i.i.d. trajectory per iteration.
pub fn run_stochastic(setup: &EvaluationSetup, config: &StochConfig) -> Result<StochTrace> {
    if config.iters == 0 {
        return Err(Error::config("iters must be at least 1"));
    }
    if config.n == 0 {
        return Err(Error::config("horizon n must be at least 1"));
    }
    let log_every = config.log_every.max(1);
    let m = setup.num_features();
    let init = |v: &Option<DVector<f64>>, what: &str| -> Result<DVector<f64>> {
        match v {
            Some(v) if v.len() != m => Err(Error::config(format!(
                "{what} has length {}, expected {m}",
                v.len()
            ))),
            Some(v) => Ok(v.clone()),
            None => Ok(DVector::zeros(m)),
        }
    };
    let mut theta = init(&config.theta0, "theta0")?;
    let mut lambda = init(&config.lambda0, "lambda0")?;
    let gtd = config.algorithm == Algorithm::Ngtd;
    let theta_star = fixed_point(setup, config.n).ok();
    let sampler = Sampler::new(setup)?;
    let mut rng = rng_for(config.seed, config.stream);

    let record = |iter: usize, theta: &DVector<f64>, lambda: &DVector<f64>| StochRecord {
        iter,
        theta: theta.clone(),
        lambda: gtd.then(|| lambda.clone()),
        dist_to_theta_star_n: theta_star.as_ref().map_or(f64::NAN, |t| (theta - t).norm()),
    };

    let mut records = vec![record(0, &theta, &lambda)];
    let mut diverged = false;
    let mut done = 0;
    for i in 0..config.iters {
        let sample = sampler.sample(config.n, &mut rng);
        let alpha = config.schedule.alpha(i);
        if gtd {
            let (t, l) = ngtd_step(setup, &theta, &lambda, &sample, alpha);
            theta = t;
            lambda = l;
        } else {
            theta = ntd_step(setup, &theta, &sample, alpha);
        }
        done = i + 1;
        let size = linalg::vec_inf(&theta).max(if gtd { linalg::vec_inf(&lambda) } else { 0.0 });
        if !(size <= DIVERGENCE_LIMIT) {
            diverged = true;
            break;
        }
        if done % log_every == 0 && done != config.iters {
            records.push(record(done, &theta, &lambda));
        }
    }
    records.push(record(done, &theta, &lambda));
    Ok(StochTrace {
        seed: config.seed,
        stream: config.stream,
        algorithm: config.algorithm,
        n: config.n,
        schedule: config.schedule,
        log_every,
        iterations_run: done,
        records,
        diverged,
        theta_star_n: theta_star,
    })
}

/// Expected per-iteration update direction (the drift at step size 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedUpdate {
    pub theta: DVector<f64>,
    /// Dual drift, present for n-GTD.
    pub lambda: Option<DVector<f64>>,
}

/// Path sums keyed by `(s_0, s_n)`: the per-sample update depends on a path
/// only through its endpoints, `ρ` and the discounted reward sum, and is
/// affine in the latter two, so accumulating `E[ρ; s_0, s_n]` and
/// `E[ρ Σγ^k r; s_0, s_n]` over all paths loses nothing.
struct Enumeration<'a> {
    setup: &'a EvaluationSetup,
    n: usize,
    /// `[s_0 * |S| + s_n]`
    rho_mass: Vec<f64>,
    rho_return: Vec<f64>,
}

impl Enumeration<'_> {
    /// Depth-first walk over every action/next-state path from `s0`,
    /// carrying the behaviour probability, the importance ratio and the
    /// discounted reward sum. Subtrees with `ρ = 0` contribute nothing.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        &mut self,
        s0: usize,
        s: usize,
        depth: usize,
        weight: f64,
        rho: f64,
        ret: f64,
        disc: f64,
    ) {
        if depth == self.n {
            let key = s0 * self.setup.num_states() + s;
            self.rho_mass[key] += weight * rho;
            self.rho_return[key] += weight * rho * ret;
            return;
        }
        let setup = self.setup;
        for a in 0..setup.num_actions() {
            let b = setup.behavior_policy.prob(s, a);
            let target = setup.target_policy.prob(s, a);
            if b == 0.0 || target == 0.0 {
                continue;
            }
            let ratio = target / b;
            for next in 0..setup.num_states() {
                let p = setup.base_mdp.prob(s, a, next);
                if p == 0.0 {
                    continue;
                }
                let r = setup.base_mdp.reward(s, a, next);
                self.walk(
                    s0,
                    next,
                    depth + 1,
                    weight * b * p,
                    rho * ratio,
                    ret + disc * r,
                    disc * setup.gamma,
                );
            }
        }
    }
}

/// Exact expectation of the per-sample update direction over
/// `s_0 ~ d^β` and every behaviour path of length `n`, by enumeration.
pub fn expected_update(
    setup: &EvaluationSetup,
    n: usize,
    theta: &DVector<f64>,
    lambda: Option<&DVector<f64>>,
    algorithm: Algorithm,
) -> Result<ExpectedUpdate> {
    if n == 0 {
        return Err(Error::config("horizon n must be at least 1"));
    }
    let paths = setup.num_states() as f64 * (setup.num_actions() as f64).powi(n as i32);
    if paths > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            paths,
            limit: ENUMERATION_LIMIT,
        });
    }
    check_support(setup)?;
    let m = setup.num_features();
    let zero = DVector::zeros(m);
    let lambda = match (algorithm, lambda) {
        (Algorithm::Ngtd, Some(l)) => l,
        (Algorithm::Ngtd, None) => &zero,
        (Algorithm::Ntd, _) => &zero,
    };
    let ns = setup.num_states();
    let mut walk = Enumeration {
        setup,
        n,
        rho_mass: vec![0.0; ns * ns],
        rho_return: vec![0.0; ns * ns],
    };
    for s0 in 0..ns {
        walk.walk(s0, s0, 0, setup.d_beta[s0], 1.0, 0.0, 1.0);
    }

    let discount_n = setup.gamma.powi(n as i32);
    let values = setup.phi() * theta;
    let duals = setup.phi() * lambda;
    let mut theta_dir = DVector::zeros(m);
    let mut lambda_dir = DVector::zeros(m);
    for s0 in 0..ns {
        let phi0 = setup.phi().row(s0).transpose();
        for sn in 0..ns {
            let mass = walk.rho_mass[s0 * ns + sn];
            if mass == 0.0 {
                continue;
            }
            // E[ρ (G − φ_0^T θ)] restricted to paths from s0 to sn
            let td = walk.rho_return[s0 * ns + sn] + mass * (discount_n * values[sn] - values[s0]);
            match algorithm {
                Algorithm::Ntd => theta_dir += &phi0 * td,
                Algorithm::Ngtd => {
                    let phin = setup.phi().row(sn).transpose();
                    theta_dir += (&phi0 - phin * discount_n) * (mass * duals[s0]);
                    lambda_dir += &phi0 * (td - mass * duals[s0]);
                }
            }
        }
    }
    Ok(ExpectedUpdate {
        theta: theta_dir,
        lambda: (algorithm == Algorithm::Ngtd).then_some(lambda_dir),
    })
}
