use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error(
        "insufficient data: {samples} samples cannot support a stencil of half-width {half_width}"
    )]
    InsufficientData { samples: usize, half_width: usize },

    #[error("gram matrix is numerically singular for columns {columns:?}")]
    Conditioning { columns: Vec<usize> },

    #[error("total noise variance is zero at point {index}; set a variance floor")]
    DegenerateNoise { index: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("sweep failed: {failed} of {total} trials errored")]
    SweepFailed { failed: usize, total: usize },

    #[error("{path}: {source}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
