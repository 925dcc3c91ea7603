//! Crate-wide error type.

/// Errors produced by any module of this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric argument is outside its mathematical domain
    /// (e.g. a propensity that is not in `(0, 1]`).
    #[error("domain error: {0}")]
    Domain(String),

    /// An invalid combination of options (e.g. a loss variant that does not
    /// exist for the requested family, or adding a bias term twice).
    #[error("configuration error: {0}")]
    Config(String),

    /// A model parameter fails its validity condition.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Unknown dataset name in the built-in propensity parameter table.
    #[error("unknown dataset `{0}`; pass explicit A and B parameters")]
    UnknownDataset(String),

    /// Malformed text input (dataset, model or prediction file). Lines are
    /// 1-based and count the header.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Mismatched dimensions between two objects that must agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A statistical fit cannot be performed on the given data.
    #[error("fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;
