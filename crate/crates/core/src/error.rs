use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {func}: {msg}")]
    Domain { func: &'static str, msg: String },

    #[error("invalid {family} parameters: {msg}")]
    InvalidParameter { family: &'static str, msg: String },

    #[error("invalid population grid: {0}")]
    InvalidGrid(String),

    #[error("{func} did not converge after {iterations} iterations")]
    NoConvergence { func: &'static str, iterations: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("period {period}: {msg}")]
    InvalidPeriod { period: String, msg: String },

    #[error("{path}:{line}:{column}: {msg}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("chain aborted at iteration {iteration}: {msg}")]
    ChainAbort { iteration: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(func: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            func,
            msg: msg.into(),
        }
    }
}
