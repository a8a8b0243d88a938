use thiserror::Error;

/// Errors raised by the recovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: String, got: String },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("SVD failed to converge on a {rows}x{cols} matrix")]
    ConvergenceFailure { rows: usize, cols: usize },

    #[error("kernel window at t={t} has no positive weight")]
    EmptyWindow { t: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unsupported design family: {0}")]
    UnsupportedFamily(String),

    #[error("time index {index} out of range 1..={horizon}")]
    IndexOutOfRange { index: usize, horizon: usize },

    #[error("lambda grid is empty")]
    EmptyGrid,

    #[error("all x values are equal; slope is undefined")]
    DegenerateFit,

    #[error("bin {bin} is empty ({rows} usable rows for {bins} bins)")]
    EmptyBin { bin: usize, rows: usize, bins: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solve failed at t={t}: {source}")]
    AtTime {
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(expected: impl ToString, got: impl ToString) -> Self {
        Error::DimMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn at_time(self, t: usize) -> Self {
        Error::AtTime {
            t,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
