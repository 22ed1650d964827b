use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("conflicting labels for account {account}: {first} vs {second}")]
    LabelConflict {
        account: String,
        first: u8,
        second: u8,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {operand}: expected {expected}, got {actual}")]
    Shape {
        operand: String,
        expected: String,
        actual: String,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("redaction violation: {0}")]
    Redaction(String),

    #[error("backend failed after {attempts} attempt(s): {message}")]
    Backend { attempts: u32, message: String },

    #[error("missing cached summary for account(s): {0}")]
    MissingSummary(String),

    #[error("unsupported format in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(
        operand: impl Into<String>,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            operand: operand.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
