use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no sample size up to {cap} reaches the requested power")]
    CapExceeded { cap: u64 },

    #[error("root solver failed: {0}")]
    SolverFailure(String),

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("insufficient wealth: cost {cost} exceeds wealth {wealth}")]
    InsufficientWealth { cost: f64, wealth: f64 },

    #[error("request infeasible: no cost up to {max_cost} satisfies the level-sample inequality")]
    Infeasible { max_cost: u64 },

    #[error("stale quote: quoted against n = {quoted_n}, current n = {current_n}")]
    StaleQuote { quoted_n: u64, current_n: u64 },

    #[error("stream exhausted after {tests} tests before the stopping condition")]
    StreamExhausted { tests: usize },

    #[error("replay diverged at entry {index}: {reason}")]
    ReplayDiverged { index: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
