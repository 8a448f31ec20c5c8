use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] a3d_core::Error),
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    /// 2 for bad input, 3 for capacity, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        use a3d_core::Error as E;
        match self {
            SimError::Core(E::Placement(_)) => 3,
            SimError::Core(E::Config(_) | E::Profiling(_) | E::Shape(_) | E::UnsupportedMode(_)) => 2,
            SimError::Read { .. } | SimError::Format { .. } | SimError::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Read { path: path.into(), source }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Write { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        SimError::Format { path: path.into(), msg: msg.to_string() }
    }
}
