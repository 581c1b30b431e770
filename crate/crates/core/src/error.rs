use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("out-of-order byte event on link {link}: t={t} is more than one small window behind {latest}")]
    OutOfOrder {
        link: usize,
        t: crate::Micros,
        latest: crate::Micros,
    },

    #[error("scenario is invalid: {}", .0.join("; "))]
    Scenario(Vec<String>),

    #[error("trace line {line}: {reason}")]
    TraceFormat { line: usize, reason: String },

    #[error("trace lacks LDNS attribution: {0}")]
    MissingAttribution(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
