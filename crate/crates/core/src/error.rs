use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("degenerate scale: received sequence has no energy")]
    DegenerateScale,

    #[error("signal has zero power")]
    ZeroPower,

    #[error("shape mismatch in layer {layer} ({kind}): {reason}")]
    Shape {
        layer: usize,
        kind: &'static str,
        reason: String,
    },

    #[error("invalid state: {0}")]
    State(&'static str),

    #[error("training diverged (non-finite loss) at step {step}")]
    Divergence { step: usize },

    #[error("frozen model was modified: {0}")]
    FrozenViolation(&'static str),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unknown dpd method `{0}`")]
    UnknownMethod(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
