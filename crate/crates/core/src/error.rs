use std::path::PathBuf;

/// Errors raised by the statistics, band and Monte-Carlo routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size mismatch: band has n = {band}, data has n = {data}")]
    SizeMismatch { band: usize, data: usize },

    /// A quantile table does not match the (family, n, nu, alpha) it is used for.
    #[error("quantile table mismatch: {0}")]
    TableMismatch(String),

    #[error("model `{model}` cannot be evaluated at x = {x}")]
    OutsideSupport { model: String, x: f64 },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
