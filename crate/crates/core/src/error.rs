use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("raw file {path} holds {actual} bytes but the header requires {expected}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("unsupported dtype {0:?} (only \"f32le\" is defined)")]
    UnsupportedDtype(String),

    #[error("malformed header or file: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("degenerate pose{}: {reason}", index.map(|i| format!(" at index {i}")).unwrap_or_default())]
    DegeneratePose {
        index: Option<usize>,
        reason: String,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("operator too large to materialize: {rows} x {cols} exceeds {limit} entries")]
    SizeGuard {
        rows: usize,
        cols: usize,
        limit: usize,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
