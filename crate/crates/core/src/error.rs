use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents that cannot be reconciled by an operation.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A layer or block specification that is internally inconsistent
    /// (indivisible channel counts, groups, odd splits).
    #[error("spec error: {0}")]
    Spec(String),
    /// Network configuration that violates an invariant; `key` is the
    /// dotted path of the offending field.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    /// Malformed or mismatched weights / fixture files.
    #[error("format error: {0}")]
    Format(String),
    /// API misuse such as calling backward on a non-scalar node.
    #[error("usage error: {0}")]
    Usage(String),
    /// Inputs for which the requested quantity is undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
