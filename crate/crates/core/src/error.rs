use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, probabilities or options that do not describe a valid problem.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("feature matrix is rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("nonpositive state weighting: d_beta[{state}] = {value}")]
    NonPositiveWeight { state: usize, value: f64 },

    #[error("stationary distribution did not converge ({0}); supply d_beta explicitly")]
    NotIrreducible(String),

    #[error("no unique fixed point at n = {n}: A_n has condition number {condition:.3e}")]
    NoUniqueFixedPoint { n: usize, condition: f64 },

    #[error("singular linear system (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("n = {n} is below the contraction horizon n* = {required}")]
    BelowHorizon { n: usize, required: usize },

    #[error("enumeration guard exceeded: {paths} paths > {limit}")]
    EnumerationTooLarge { paths: f64, limit: f64 },

    /// A certified inequality failed numerically. This signals a bug, not a
    /// property of the problem.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("problem file: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
