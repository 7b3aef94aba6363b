//! Canned problems: the two-state divergence instance, Baird's star and a
//! seeded random generator.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{build_setup, EvaluationSetup, FeatureMap, FiniteMdp, Policy};

/// Two states, two actions: `a1` moves to `s1`, `a2` moves to `s2`, rewards
/// are zero. Target policy always picks `a2`, behaviour is uniform,
/// `Φ = [1; 2]`, `γ = 0.99`. Off-policy TD(0) expands `θ` here.
pub fn twostate() -> EvaluationSetup {
    let transition = vec![
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    ];
    let reward = vec![vec![vec![0.0; 2]; 2]; 2];
    let mdp = FiniteMdp::new(&transition, &reward, 0.99).expect("twostate mdp");
    let phi = FeatureMap::from_rows(&[vec![1.0], vec![2.0]]).expect("twostate features");
    build_setup(
        &mdp,
        &Policy::deterministic(2, 2, 1),
        &Policy::uniform(2, 2),
        &phi,
        None,
    )
    .expect("twostate setup")
}

const BAIRD_STATES: usize = 7;
const DASHED: usize = 0;
const SOLID: usize = 1;

/// Baird's seven-state star. `dashed` jumps uniformly to one of the six
/// outer states, `solid` jumps to the centre state; rewards are zero and
/// `γ = 0.99`. Behaviour takes `dashed` w.p. 6/7, the target always takes
/// `solid`.
///
/// The classic parametrisation has eight features spanning only seven
/// dimensions. We drop the centre state's private weight, which leaves a
/// full-rank `7 × 7` map: outer state `i` has `2 e_i + e_shared`, the centre
/// has `2 e_shared`. One-step off-policy TD is still unstable on it.
pub fn baird_star() -> EvaluationSetup {
    let outer = BAIRD_STATES - 1;
    let mut transition = vec![vec![vec![0.0; BAIRD_STATES]; 2]; BAIRD_STATES];
    for row in transition.iter_mut() {
        for next in 0..outer {
            row[DASHED][next] = 1.0 / outer as f64;
        }
        row[SOLID][outer] = 1.0;
    }
    let reward = vec![vec![vec![0.0; BAIRD_STATES]; 2]; BAIRD_STATES];
    let mdp = FiniteMdp::new(&transition, &reward, 0.99).expect("baird mdp");

    let mut phi = DMatrix::zeros(BAIRD_STATES, BAIRD_STATES);
    for i in 0..outer {
        phi[(i, i)] = 2.0;
        phi[(i, outer)] = 1.0;
    }
    phi[(outer, outer)] = 2.0;
    let phi = FeatureMap::new(phi).expect("baird features");

    let beta_row = {
        let mut r = vec![0.0; 2];
        r[DASHED] = 6.0 / 7.0;
        r[SOLID] = 1.0 / 7.0;
        r
    };
    let beta = Policy::new(&vec![beta_row; BAIRD_STATES]).expect("baird behaviour");
    let pi = Policy::deterministic(BAIRD_STATES, 2, SOLID);
    build_setup(&mdp, &pi, &beta, &phi, None).expect("baird setup")
}

/// Parameters of the seeded random problem generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSpec {
    pub states: usize,
    pub actions: usize,
    pub features: usize,
    pub seed: u64,
    pub gamma: f64,
    pub on_policy: bool,
}

impl RandomSpec {
    pub fn new(states: usize, actions: usize, features: usize, seed: u64) -> Self {
        Self {
            states,
            actions,
            features,
            seed,
            gamma: 0.9,
            on_policy: false,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Use the target policy as behaviour policy.
    pub fn on_policy(mut self) -> Self {
        self.on_policy = true;
        self
    }

    /// Parses `random-k?states=5&actions=2&features=2&seed=7[&gamma=..][&on_policy=1]`.
    pub fn parse(id: &str) -> Result<Self> {
        let query = id
            .strip_prefix("random-k")
            .ok_or_else(|| Error::config(format!("not a random-k id: {id}")))?;
        let query = query.strip_prefix('?').unwrap_or(query);
        let mut spec = RandomSpec::new(5, 2, 2, 0);
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::config(format!("malformed parameter '{pair}'")))?;
            let bad = || Error::config(format!("invalid value for {key}: '{value}'"));
            match key {
                "states" => spec.states = value.parse().map_err(|_| bad())?,
                "actions" => spec.actions = value.parse().map_err(|_| bad())?,
                "features" => spec.features = value.parse().map_err(|_| bad())?,
                "seed" => spec.seed = value.parse().map_err(|_| bad())?,
                "gamma" => spec.gamma = value.parse().map_err(|_| bad())?,
                "on_policy" => spec.on_policy = matches!(value, "1" | "true"),
                other => return Err(Error::config(format!("unknown parameter '{other}'"))),
            }
        }
        Ok(spec)
    }
}

/// Largest 2-norm condition number accepted for random feature matrices.
pub const RANDOM_FEATURE_CONDITION: f64 = 5.0;
const RANDOM_ATTEMPTS: usize = 1000;

fn random_distribution(rng: &mut ChaCha8Rng, len: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| floor + rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Policy row skewed toward one action; the `floor` keeps it strictly positive.
fn skewed_policy(rng: &mut ChaCha8Rng, actions: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..actions)
        .map(|_| floor + rng.gen::<f64>().powi(3))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Dense random MDP with rewards in `[-1, 1]`, a skewed target policy, a
/// near-uniform behaviour policy and features uniform in `[-1, 1]` with
/// condition number at most [`RANDOM_FEATURE_CONDITION`]. Draws that leave
/// the behaviour chain reducible are redrawn. Deterministic in `spec`.
pub fn random_setup(spec: &RandomSpec) -> Result<EvaluationSetup> {
    let RandomSpec {
        states,
        actions,
        features,
        seed,
        gamma,
        on_policy,
    } = *spec;
    if states == 0 || actions == 0 || features == 0 || features > states {
        return Err(Error::config(format!(
            "random-k needs states >= features >= 1 and actions >= 1 (got {states}, {actions}, {features})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = loop {
        let m = DMatrix::from_fn(states, features, |_, _| rng.gen_range(-1.0..1.0));
        if linalg::condition_number(&m) > RANDOM_FEATURE_CONDITION {
            continue;
        }
        match FeatureMap::new(m) {
            Ok(phi) => break phi,
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    };
    let mut last_error = None;
    for _ in 0..RANDOM_ATTEMPTS {
        let transition: Vec<Vec<Vec<f64>>> = (0..states)
            .map(|_| {
                (0..actions)
                    .map(|_| random_distribution(&mut rng, states, 0.0))
                    .collect()
            })
            .collect();
        let reward: Vec<Vec<Vec<f64>>> = (0..states)
            .map(|_| {
                (0..actions)
                    .map(|_| (0..states).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect();
        let pi: Vec<Vec<f64>> = (0..states)
            .map(|_| skewed_policy(&mut rng, actions, 0.02))
            .collect();
        let beta: Vec<Vec<f64>> = if on_policy {
            pi.clone()
        } else {
            (0..states)
                .map(|_| random_distribution(&mut rng, actions, 0.5))
                .collect()
        };
        let mdp = FiniteMdp::new(&transition, &reward, gamma)?;
        match build_setup(&mdp, &Policy::new(&pi)?, &Policy::new(&beta)?, &phi, None) {
            Ok(setup) => return Ok(setup),
            Err(e @ Error::NotIrreducible(_)) => last_error = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_error.unwrap_or_else(|| Error::config("random-k generation failed")))
}
