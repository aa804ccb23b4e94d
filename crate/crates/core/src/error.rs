use thiserror::Error;

/// Failures surfaced by the estimator, simulator and command layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("3-1-2 attitude singularity: |R23| = {0:.12}")]
    Singularity(f64),
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("search budget exhausted after {0} nodes")]
    SearchBudget(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::Io(_) => 3,
            _ => 4,
        }
    }
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.to_string())
        } else {
            Error::Config(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
