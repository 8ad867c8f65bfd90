use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
///
/// The variants map onto the CLI exit codes: configuration problems,
/// data/file problems and numeric failures are reported differently.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a mathematical operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or invalid configuration (length mismatches, bad splits, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent data, including truncated files.
    #[error("data error: {0}")]
    Data(String),

    /// A file could not be parsed; `offset` is the byte position of the failure.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// A numeric procedure failed (singular matrix, non-finite values).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A pipeline stage failed; wraps the underlying error with the stage name.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Tag this error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
