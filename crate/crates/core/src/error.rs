use thiserror::Error;

/// Errors surfaced by the preprocessing and clustering stages.
///
/// Per-line parse failures are *not* represented here: dirty log lines are
/// expected input, so they are counted in [`crate::log_ingest::CleanStats`]
/// and carried as [`crate::log_ingest::ParseError`] values instead of
/// aborting a run.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed {what} (line {line}): {reason}")]
    BadFormat {
        what: String,
        line: usize,
        reason: String,
    },

    #[error("no sessions")]
    NoSessions,

    #[error("empty feature space: no URLs survived filtering")]
    EmptyFeatureSpace,

    #[error("fewer sessions than clusters: {rows} usable rows for c = {clusters}")]
    TooFewRows { rows: usize, clusters: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("zero separation: cluster centers coincide")]
    ZeroSeparation,

    #[error("cluster sweep produced no usable candidate: {0}")]
    SweepExhausted(String),
}

pub type Result<T> = std::result::Result<T, Error>;
