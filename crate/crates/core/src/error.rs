use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("measurement failed: {0}")]
    Measurement(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("classification refused: {0}")]
    Classification(String),

    #[error("malformed spike data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
