use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed input row; `line` is 1-based and counts the header.
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("column `{0}` has no valid samples and cannot be repaired")]
    UnrecoverableColumn(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("expression parse error at offset {offset}: {message}")]
    ExprParse { offset: usize, message: String },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn integrity(msg: impl Into<String>) -> Self {
        Error::Integrity(msg.into())
    }

    /// True for errors caused by how the tool was invoked or configured,
    /// as opposed to problems with the data itself.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
