use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("referential integrity: {0}")]
    Integrity(String),

    #[error("unknown {kind} id {id}")]
    Lookup { kind: &'static str, id: u64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("clock regression: slot {requested} is not after {previous}")]
    Ordering { previous: u64, requested: u64 },

    #[error("capacity error: need {needed} units, capacity is {capacity}")]
    Capacity { needed: u64, capacity: u64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn fit(msg: impl Into<String>) -> Self {
        Error::Fit(msg.into())
    }

    pub(crate) fn user(id: u32) -> Self {
        Error::Lookup {
            kind: "user",
            id: u64::from(id),
        }
    }

    pub(crate) fn region(id: u32) -> Self {
        Error::Lookup {
            kind: "region",
            id: u64::from(id),
        }
    }

    /// True for errors caused by bad input configuration rather than a
    /// failure while running.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse { .. } | Error::Integrity(_))
    }

    /// True when an analysis could not run because its input did not meet a
    /// precondition (too few samples, empty class, degenerate fit).
    pub fn is_precondition(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Fit(_))
    }
}
