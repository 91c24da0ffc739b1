use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // The cause is part of the message rather than a chained source, so
    // plain `to_string` (used in sweep manifests) keeps it.
    #[error("i/o error on {path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("malformed input at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("record {id}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("record {id}: non-finite embedding component")]
    NonFinite { id: String },
    #[error("empty data: {0}")]
    Empty(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("zero-norm vector in {0}")]
    ZeroNorm(&'static str),
    #[error("vector {index} is not unit-norm (norm {norm})")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("numeric failure at step {step}: {what}")]
    Numeric { step: usize, what: String },
    #[error("unsupported format version {found:?}, expected {expected:?}")]
    Version { expected: String, found: String },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("no configuration preserves the vector space (delta threshold {threshold})")]
    NoSurvivor { threshold: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Numeric { .. } | Error::ZeroNorm(_) | Error::NotUnitNorm { .. } => 3,
            Error::NoSurvivor { .. } => 4,
            _ => 2,
        }
    }
}
