use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,

    #[error("non-finite value at sample {0}")]
    NonFinite(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("correlation undefined for constant input")]
    UndefinedCorrelation,

    #[error("band {low_hz}-{high_hz} Hz is not realizable at {rate_hz} Hz")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        rate_hz: f64,
    },

    #[error("polynomial baseline fit of order {order} is ill-conditioned")]
    IllConditioned { order: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("loss is not connected to any trainable tensor")]
    Disconnected,

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss term `{term}` at step {step} (last good checkpoint: {})",
        .last_good.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into()))]
    NonFiniteLoss {
        term: String,
        step: usize,
        last_good: Option<PathBuf>,
    },

    #[error("batch norm in train mode needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),

    #[error("input is not normalized to [0, 1] (found value {0})")]
    NotNormalized(f64),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("cannot split {items} items into {folds} folds")]
    TooFewItems { items: usize, folds: usize },

    #[error("need at least {needed} peaks, got {got}")]
    TooFewPeaks { needed: usize, got: usize },

    #[error("malformed {what}: {msg}")]
    Malformed { what: &'static str, msg: String },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
