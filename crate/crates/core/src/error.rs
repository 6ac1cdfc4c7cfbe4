use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// `log_map` was asked for a rotation on (or too close to) the branch cut at pi.
    #[error("rotation angle {angle} rad is outside the principal branch of Log")]
    BranchCut { angle: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("zero linear velocity at q = {q}")]
    ZeroVelocity { q: f64 },

    #[error("solver failed: {0}")]
    SolverFailure(String),

    #[error("clustering failed: {0}")]
    Clustering(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
