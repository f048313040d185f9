use thiserror::Error;

/// Errors raised across the solver, partitioner and simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Shapes, indices or ids that do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    /// Cholesky broke down; `pivot` is the 0-based row whose pivot was not positive.
    #[error("factorization failed at pivot {pivot} (value {value:e})")]
    Factorization { pivot: usize, value: f64 },

    #[error("matrix is singular (pivot column {column})")]
    Singular { column: usize },

    /// A split plan that cannot be applied to the graph it targets.
    #[error("invalid split plan: {0}")]
    Plan(String),

    /// A local system whose reduced matrix cannot be factored.
    #[error("assembly of subgraph {subgraph} failed: {reason}")]
    Assembly { subgraph: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular value encountered: {0}")]
    Singularity(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}
