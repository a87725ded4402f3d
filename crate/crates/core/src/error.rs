use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("size mismatch: expected {expected} sites, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty fit window: {0}")]
    EmptyFitWindow(String),

    #[error("autocorrelation integral did not converge: {0}")]
    NonConvergence(String),

    #[error("config error in {path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("malformed csv {path}:{line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("realization {index} (seed {seed:#018x}) failed: {message}")]
    RealizationFailed {
        index: usize,
        seed: u64,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used on the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidLattice(_) => "invalid_lattice",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::EmptyFitWindow(_) => "empty_fit_window",
            Error::NonConvergence(_) => "non_convergence",
            Error::Config { .. } => "config",
            Error::Csv { .. } => "csv",
            Error::Io { .. } => "io",
            Error::RealizationFailed { .. } => "realization_failed",
        }
    }
}
