use std::path::PathBuf;

/// Errors produced anywhere in the reduced-order pipeline.
#[derive(Debug, thiserror::Error)]
pub enum RomError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical failure: {message} (residual {residual:.3e})")]
    NumericalFailure { message: String, residual: f64 },

    #[error("time interval ({start}, {end}] contains no snapshot")]
    EmptySlice { start: f64, end: f64 },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unsupported format version {found} (reader supports {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("interpolation needs at least {needed} training parameters, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("kernel matrix is ill-conditioned (estimated condition number {condition:.3e})")]
    Conditioning { condition: f64 },

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<RomError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, RomError>;

impl RomError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        RomError::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RomError::Io { path: path.into(), source }
    }

    /// Wraps the error with a short description of what was being done.
    pub fn context(self, context: impl Into<String>) -> Self {
        RomError::Context { context: context.into(), source: Box::new(self) }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &RomError {
        match self {
            RomError::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(RomError::DimensionMismatch { expected, got })
    }
}
