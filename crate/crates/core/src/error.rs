use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid transform kind `{0}`")]
    InvalidKind(String),

    #[error("invalid magnitude {0} (must be finite and non-negative)")]
    InvalidMagnitude(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated data: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("checksum mismatch: header says {expected:#018x}, payload hashes to {actual:#018x}")]
    Checksum { expected: u64, actual: u64 },

    #[error("adapter failure{}: {message}", .subpolicy.map(|id| format!(" on sub-policy {id}")).unwrap_or_default())]
    Adapter { subpolicy: Option<usize>, message: String },

    #[error("corruption `{0}` has a zero baseline error sum")]
    UndefinedNormalizer(String),

    #[error("unknown corruption `{0}`")]
    UnknownCorruption(String),

    #[error("index {index} out of range (valid: 0..{len})")]
    OutOfRange { index: usize, len: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("missing cache entries for sub-policies {0:?}")]
    MissingCache(Vec<usize>),

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn adapter(subpolicy: Option<usize>, message: impl Into<String>) -> Self {
        Error::Adapter {
            subpolicy,
            message: message.into(),
        }
    }

    /// Attach the file path the error came from.
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::Path {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping path context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Path { source, .. } => source.root(),
            other => other,
        }
    }

    /// Whether the failure came from the model adapter rather than the data.
    pub fn is_adapter(&self) -> bool {
        matches!(self.root(), Error::Adapter { .. })
    }
}
