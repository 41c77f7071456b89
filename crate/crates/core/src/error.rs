use thiserror::Error;

/// Errors raised by the forecast-comparison tests and their data plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("series is empty")]
    EmptySeries,

    #[error("invalid data at {location}: {reason}")]
    InvalidData { location: String, reason: String },

    #[error("series too short: need at least {needed} observations, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("bandwidth {bandwidth} must be smaller than the series length {len}")]
    BandwidthTooLarge { bandwidth: usize, len: usize },

    #[error("long-run variance estimate is degenerate (sigma2 = {sigma2})")]
    DegenerateVariance { sigma2: f64 },

    #[error("fluctuation window {window} must be smaller than the series length {len}")]
    WindowTooLarge { window: usize, len: usize },

    #[error("instability block of length {k} is too long for a series of length {len}")]
    BlockTooLong { k: usize, len: usize },

    #[error("weighting matrix is singular")]
    SingularWeighting,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gap in quarterly series: expected {expected} after {after}, found {found}")]
    GapInSeries {
        after: String,
        expected: String,
        found: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("cannot open {}: {source}", path.display())]
    Open {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid_data(location: impl ToString, reason: impl Into<String>) -> Self {
        Error::InvalidData {
            location: location.to_string(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn open(path: &std::path::Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })
}

pub type Result<T> = std::result::Result<T, Error>;
