use thiserror::Error;

pub type Result<T, E = AuditError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AuditError {
    /// A required column is absent, or a scheme/feature definition is malformed.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("no records matched filter {column}={value}")]
    NoRecordsMatched { column: String, value: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("bin index out of range: {0}")]
    Index(String),

    /// Two measures were built on different binning schemes.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("sample budget error: {0}")]
    Budget(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("no convergence after {iterations} iterations (marginal residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("problem too large for the exact solver: {0}")]
    Size(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("config error in key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl AuditError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        AuditError::Parameter(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        AuditError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
