use thiserror::Error;

/// Errors produced by the bound and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No `p` satisfies `p > 1/2` and `p(1-p) >= c`.
    #[error("domination infeasible: sup of up-down products c = {c} must be below 1/4")]
    InfeasibleDomination { c: f64 },

    #[error("gamma0 is zero: some chain never stays at state 0")]
    ZeroGamma0,

    #[error("moment series for p = {p} did not reach tolerance within {terms} terms")]
    SeriesNotConverged { p: f64, terms: usize },

    #[error("horizon too short: {0}")]
    HorizonTooShort(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T> = std::result::Result<T, Error>;
