use std::io;

use thiserror::Error;

/// Every failure the library reports. Variants map onto the operator exit
/// code classes: configuration/parameter/input problems, connectivity, and
/// protocol or detection failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("threshold error: need at least {needed} shares, got {got}")]
    Threshold { needed: usize, got: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("randomness failure: {0}")]
    Randomness(String),
    #[error("decode failure: {0}")]
    Decode(String),
    #[error("frame error: {0}")]
    Frame(String),
    #[error("connectivity error: {0}")]
    Connectivity(String),
    #[error("aborted: {0}")]
    Aborted(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Connectivity,
    Protocol,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_)
            | Error::Param(_)
            | Error::Domain(_)
            | Error::Input(_)
            | Error::Threshold { .. } => ErrorClass::Validation,
            Error::Connectivity(_) | Error::Io(_) => ErrorClass::Connectivity,
            Error::Protocol(_)
            | Error::Randomness(_)
            | Error::Decode(_)
            | Error::Frame(_)
            | Error::Aborted(_) => ErrorClass::Protocol,
        }
    }
}
