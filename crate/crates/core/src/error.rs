use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("invalid raster: {0}")]
    InvalidGrid(String),

    #[error("grids are not aligned (origin, cell size and shape must match); resample one onto the other with resample_nearest first")]
    Misaligned,

    #[error("grids do not overlap")]
    NoOverlap,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero-length path: transmitter and receiver coincide")]
    ZeroLengthPath,

    #[error("foliage depth {0} m exceeds the 400 m validity limit of the WMED model")]
    WmedOutOfRange(f64),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("{count} tile(s) failed to download: {}", failed.join(", "))]
    Fetch { count: usize, failed: Vec<String> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    CsvFormat(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
