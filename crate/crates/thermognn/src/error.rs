use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural misuse: shape mismatches, bad presets, invalid flags.
    #[error("configuration error: {0}")]
    Config(String),

    /// NaN/Inf surfaced during computation; context names where.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Dataset file did not validate.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
