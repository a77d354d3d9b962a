use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Two particles share a location, so the pair interaction is undefined.
    #[error("particles {first} and {second} occupy the same position")]
    DuplicatePosition { first: usize, second: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("window q={q}, r={r} does not fit {n} particles")]
    WindowOutOfRange { q: usize, r: usize, n: usize },

    #[error("sample is empty")]
    EmptySample,

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    EigenFailure { sweeps: usize },

    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
