use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown symbol {0:?} for this alphabet")]
    UnknownSymbol(String),
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("evaluation set does not cover {} required element(s): {}", .0.len(), .0.join(", "))]
    Coverage(Vec<String>),
    #[error("mode error: {0}")]
    Mode(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("stream error: {0}")]
    Stream(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("incompatible reports: {0}")]
    Incompatible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
