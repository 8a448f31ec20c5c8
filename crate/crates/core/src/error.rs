use alloc::string::String;

/// Errors raised by the simulation core.
///
/// The companion crate maps these onto process exit codes, so the variants
/// follow the failure classes a caller can act on rather than the module
/// that raised them.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),
    #[error("placement error: {0}")]
    Placement(String),
    #[error("profiling error: {0}")]
    Profiling(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("metrics error: {0}")]
    Metrics(String),
    #[error("scheduler bug: {0}")]
    Scheduler(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
