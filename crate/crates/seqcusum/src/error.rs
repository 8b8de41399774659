use thiserror::Error;

/// Errors raised across the crate.
///
/// The taxonomy mirrors the CLI exit-code discipline: configuration,
/// precondition, state and calibration problems are usage errors, while
/// data, degenerate-data, parse and I/O problems reflect bad input.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad parameter combination, bad flag value).
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite or otherwise unusable observations.
    #[error("data error: {0}")]
    Data(String),

    /// An operation was called outside its domain (e.g. querying a
    /// detector before any monitoring observation arrived).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Input with no usable variation (constant learning sample etc.).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Quantile calibration could not be carried out as requested.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// The monitor was driven after it had already stopped.
    #[error("state error: {0}")]
    State(String),

    /// No variance normalization is available for the requested parameter.
    #[error("unsupported normalization: {0}")]
    UnsupportedNormalization(String),

    /// Malformed text input; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A quantile table lookup failed; the message lists nearby cells.
    #[error("quantile cell not found: {0}")]
    MissingQuantile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
