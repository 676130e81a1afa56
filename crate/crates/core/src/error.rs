use thiserror::Error;

/// Errors produced anywhere in the design stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("FIM is singular (condition number {condition:.3e})")]
    SingularFim { condition: f64 },

    #[error("cannot extract a rank-one factor from a zero matrix")]
    ZeroMatrix,

    #[error("secrecy constraint infeasible{}", .iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    InfeasibleSecrecy { iteration: Option<usize> },

    #[error("conic solver failed: {0}")]
    Solver(String),

    #[error("problem too large: {lmis} PEB LMIs exceed the cap of {cap} (K = {k})")]
    ProblemTooLarge { k: usize, lmis: usize, cap: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn degenerate(msg: impl Into<String>) -> Error {
    Error::DegenerateGeometry(msg.into())
}
