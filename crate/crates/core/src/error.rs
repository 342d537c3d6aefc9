use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// [`Error::is_validation`] separates bad inputs (caller's fault) from
/// failures that happen while running a valid request.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate hypothesis id `{id}` in {path}")]
    DuplicateId { path: PathBuf, id: String },

    #[error("no hypothesis id is shared by all {0} studies")]
    EmptyIntersection(usize),

    #[error("covariance matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("no root in bracket [{lo}, {hi}]: {detail}")]
    NoRoot { lo: f64, hi: f64, detail: String },

    #[error("replication {rep} failed: {source}")]
    Replication {
        rep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True when the error stems from invalid user input rather than a
    /// runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Domain(_)
            | Error::Config(_)
            | Error::Parse { .. }
            | Error::DuplicateId { .. }
            | Error::EmptyIntersection(_)
            | Error::NotPositiveDefinite(_) => true,
            Error::Replication { source, .. } => source.is_validation(),
            Error::NoRoot { .. } | Error::Io(_) | Error::Csv(_) => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
