use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error("shape mismatch: expected {expected} sites, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("block placement infeasible: {0}")]
    Placement(String),

    #[error("signal infeasible: tanh(A) would be {0}, which is not below 1")]
    InfeasibleSignal(f64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
