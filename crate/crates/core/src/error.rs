use thiserror::Error;

/// Errors raised across the library.
///
/// Variants map onto the failure classes the harness turns into exit codes:
/// shape/domain problems are data errors, protocol/transport problems are
/// protocol errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("value out of fixed-point range: {0}")]
    Range(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("offline material exhausted: {0}")]
    Offline(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
