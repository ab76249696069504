use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("internal consistency failure: {0}")]
    Consistency(String),
    #[error("precondition not met: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
