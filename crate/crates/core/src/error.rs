use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("row count mismatch: source `{first}` has {first_rows} rows but `{other}` has {other_rows}")]
    Alignment {
        first: String,
        first_rows: usize,
        other: String,
        other_rows: usize,
    },

    #[error("label {label} at row {row} is out of range for {n_classes} classes")]
    LabelRange {
        row: usize,
        label: usize,
        n_classes: usize,
    },

    #[error("strategy {strategy} requires source `{source_name}`, which is missing")]
    MissingSource { strategy: u8, source_name: String },

    #[error("unknown strategy `{0}`; valid indices are 1-15 or one of the named aliases")]
    UnknownStrategy(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("backward pass has no usable cache: {0}")]
    Cache(String),

    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("no wattage declared for phase `{0}`")]
    UnknownPhase(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short code used by the command line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Corrupt(_) => "corrupt",
            Error::Validation(_) => "validation",
            Error::Alignment { .. } => "alignment",
            Error::LabelRange { .. } => "label_range",
            Error::MissingSource { .. } => "missing_source",
            Error::UnknownStrategy(_) => "unknown_strategy",
            Error::Shape(_) => "shape",
            Error::Cache(_) => "cache",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::CheckpointMismatch(_) => "checkpoint_mismatch",
            Error::UnknownPhase(_) => "unknown_phase",
            Error::Json(_) => "json",
        }
    }
}
