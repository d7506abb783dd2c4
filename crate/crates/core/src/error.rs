use thiserror::Error;

/// Everything that can go wrong inside the simulator and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid population size {0}: need at least one client")]
    InvalidSize(usize),

    #[error("client {client}: {reason}")]
    MalformedRow { client: usize, reason: String },

    #[error("server index {server} out of range for {n} servers")]
    ServerOutOfRange { server: usize, n: usize },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },

    #[error("strategy mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("internal consistency violated: {0}")]
    Inconsistent(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("client {client} has a zero-sum strategy block; normalization is undefined")]
    DegenerateStrategy { client: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn param(name: &'static str, value: f64, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason: reason.into(),
        }
    }
}
