use std::path::PathBuf;

use crate::obs_model::Band;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Schema violation; `field` is the JSON path of the offending value.
    #[error("parse error at `{field}` (line {line}, column {column}): {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("insufficient geometry on {band}: {common} common satellite(s)")]
    InsufficientGeometry { band: Band, common: usize },

    #[error("no band has two or more common satellites at t={time}")]
    NoGeometry { time: f64 },

    #[error("singular geometry: receiver coincides with satellite {0}")]
    SingularGeometry(String),

    #[error("difference matrix needs at least 2 satellites, got {0}")]
    TooFewSatellites(usize),

    #[error("normal matrix is not positive definite: pivot {pivot} (column {column}) = {value:e}")]
    NotPositiveDefinite {
        pivot: usize,
        column: usize,
        value: f64,
    },

    #[error("non-finite entry in least-squares system at row {row}")]
    NonFinite { row: usize },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
