use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("grid needs an odd number of points >= 3, got {0}")]
    InvalidGridSize(usize),

    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("root finder did not converge after {iterations} iterations; best bracket [{lo}, {hi}]")]
    NoConvergence { lo: f64, hi: f64, iterations: usize },

    #[error("analysis {analysis}: requested spend {requested} exceeds remaining continuation mass {available}")]
    InfeasibleSpend {
        analysis: usize,
        requested: f64,
        available: f64,
    },

    #[error("design requires equal group sizes (n_j = j * g)")]
    UnequalGroups,

    #[error("outcome z = {z} at analysis {analysis} is not attainable under boundary {boundary}")]
    UnattainableOutcome { analysis: usize, z: f64, boundary: f64 },

    #[error("flat prior with no data gives an improper posterior")]
    ImproperPosterior,

    #[error("analysis {analysis} is the final analysis; no future data remain")]
    NoFutureData { analysis: usize },

    #[error("target {target} cannot be bracketed: attainable range [{lo}, {hi}]")]
    InfeasibleTarget { target: f64, lo: f64, hi: f64 },

    #[error("objective is not monotone on the search bracket")]
    NotMonotone,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
