use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Debug, Error)]
pub enum BapError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid body: {0}")]
    InvalidBody(String),

    #[error("empty body list")]
    EmptyBodyList,

    #[error("projection active-set solver exceeded its cycle limit after {iterations} steps on a {rows}x{cols} system")]
    QpCycleLimit {
        rows: usize,
        cols: usize,
        iterations: usize,
    },

    #[error("constraint system is infeasible")]
    Infeasible,

    #[error("sublevel residual has zero subgradient at an infeasible point")]
    DegenerateSubgradient,

    #[error("body kind does not expose a sublevel residual")]
    UnsupportedResidual,

    #[error("point is not in the diagonal subspace (deviation {deviation:e})")]
    NonDiagonalInput { deviation: f64 },

    #[error("input point is infeasible: violation {violation:e} exceeds {tol:e}")]
    InfeasiblePoint { violation: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("reference oracle failed: {0}")]
    OracleFailure(String),

    #[error("reference routes disagree: |a - b| = {gap:e} > tol {tol:e}")]
    OracleDisagreement { gap: f64, tol: f64 },

    #[error("unsupported instance schema version {got} (expected {expected})")]
    SchemaVersion { expected: u32, got: u32 },

    #[error("instance file error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BapError>;
