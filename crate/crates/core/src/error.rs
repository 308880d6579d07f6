use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("underdetermined system: {pilots} pilots for {dim} unknowns")]
    Underdetermined { pilots: usize, dim: usize },

    #[error("singular system (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("dual solver stopped with status {status:?} after {iterations} iterations")]
    SolverFailed {
        status: crate::sdp::SolveStatus,
        iterations: usize,
        tau_trace: Vec<f64>,
    },

    #[error("configuration invalid: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
