use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Data,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("TIFF error on {path}: {source}")]
    Tiff {
        path: PathBuf,
        #[source]
        source: tiff::TiffError,
    },

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("band {index} requested but the assembled stack has {available} bands")]
    BandCount { index: usize, available: usize },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("semantic band {0} is not resolvable through the band map")]
    UnresolvedBand(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported raster: {0}")]
    UnsupportedRaster(String),

    #[error("insufficient {stratum} pixels: need {needed}, have {available}")]
    InsufficientPixels {
        stratum: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("polygon set is empty but {0} EC samples were requested")]
    EmptyPolygonSet(usize),

    #[error("degenerate ring: {0}")]
    DegenerateRing(String),

    #[error("sample at (col {col}, row {row}) lies outside a {width}x{height} raster")]
    OutOfBounds {
        col: usize,
        row: usize,
        width: usize,
        height: usize,
    },

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("producer's accuracy undefined: no reference EC samples were evaluated")]
    UndefinedProducerAccuracy,

    #[error("too few samples for class {class}: need at least {needed}, have {available}")]
    TooFewSamples {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("covariance of class {0} is singular after regularization")]
    SingularCovariance(String),

    #[error("unknown class {0}")]
    UnknownClass(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("JSON error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::Tiff { .. } | Error::MissingFile(_) | Error::Json { .. } => {
                ErrorKind::Io
            }
            Error::InvalidConfig(_)
            | Error::UnresolvedBand(_)
            | Error::BandCount { .. }
            | Error::UnknownClass(_)
            | Error::InvalidLayout(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn tiff(path: impl Into<PathBuf>, source: tiff::TiffError) -> Self {
        Error::Tiff {
            path: path.into(),
            source,
        }
    }
}
