use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// `row` and `col` are 1-based positions in the file, header included.
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("unknown class label {value:?} at row {row}")]
    UnknownLabel { value: String, row: usize },
    #[error("model schema version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("malformed model document: {0}")]
    Schema(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no variable was selected")]
    EmptySelection,
    #[error(transparent)]
    Model(#[from] stepredda_core::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::NonFinite { .. } => "non_finite",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Schema(_) => "schema",
            Error::Config(_) => "config",
            Error::EmptySelection => "empty_selection",
            Error::Model(stepredda_core::Error::DimensionMismatch { .. }) => "dimension",
            Error::Model(_) => "model",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
