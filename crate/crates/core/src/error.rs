use std::io;

use thiserror::Error;

use crate::graph::TransitionRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An identifier or argument outside the environment's declared domain.
    #[error("input out of domain: {0}")]
    InputDomain(String),

    /// Invalid configuration; `field` names the offending key.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// The same (state, action) pair was observed with two different outcomes.
    #[error("determinism violation: recorded {existing:?}, observed {observed:?}")]
    DeterminismViolation {
        existing: TransitionRecord,
        observed: TransitionRecord,
    },

    #[error("propagation exceeded {limit} updates")]
    RunawayPropagation { limit: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
