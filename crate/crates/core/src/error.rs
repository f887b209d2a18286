use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative time step {0} s")]
    NegativeTimeStep(f64),

    #[error("covariance is not symmetric positive-definite")]
    NotPositiveDefinite,

    #[error("infeasible track spec: {0}")]
    InfeasibleTrack(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("snapshot at t={got} s arrived after t={last} s")]
    OutOfOrderSnapshot { last: f64, got: f64 },

    #[error("graph has no pose nodes")]
    EmptyGraph,

    #[error("normal equations are rank deficient beyond the gauge freedom: {0}")]
    RankDeficient(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("log schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
