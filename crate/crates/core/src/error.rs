use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A modelling assumption does not hold (d > r, positive weights, isolated node).
    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("enumeration cap exceeded: {states} states > cap {cap}")]
    CapExceeded { states: f64, cap: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("generator retry budget exhausted after {0} attempts")]
    RetryBudgetExhausted(usize),

    #[error("no isolated node in the graph estimate")]
    NoIsolatedNode,

    #[error("infeasible threshold: {0}")]
    InfeasibleThreshold(String),

    #[error("spectral decomposition failed: {0}")]
    Spectral(String),

    #[error("conditioning on a null event: {0}")]
    NullEvent(String),

    #[error("sets are adjacent, no vertex separator exists")]
    Adjacent,

    #[error("empty sample set")]
    EmptySamples,

    #[error("all pairs missing: no witness node available for any pair")]
    AllPairsMissing,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
