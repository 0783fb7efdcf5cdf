use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] mvpose_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("{path}: byte offset {offset}: {message}")]
    Format { path: PathBuf, offset: u64, message: String },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),
    #[error("rig error: {0}")]
    Rig(String),
    #[error("bench error: {0}")]
    Bench(String),
    #[error("pipeline stage failed: {0}")]
    Stage(String),
}

/// Process exit codes of the command line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Runtime = 3,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for a stream that ends inside a record or frame.
    pub fn is_truncation(&self) -> bool {
        match self {
            Error::Record { message, .. } => message.starts_with(crate::io::jsonl::TRUNCATED_RECORD),
            Error::Format { message, .. } => message.starts_with(crate::io::binary::TRUNCATED_FRAME),
            _ => false,
        }
    }

    pub fn exit_kind(&self) -> ExitKind {
        use mvpose_core::Error as C;
        match self {
            Error::Config(_) | Error::Rig(_) => ExitKind::Usage,
            Error::Io { .. } | Error::Record { .. } | Error::Format { .. } | Error::Json { .. } => ExitKind::Data,
            Error::Core(
                C::Topology { .. }
                | C::Skeleton(_)
                | C::Calibration(_)
                | C::EngineConfig(_)
                | C::InvalidBox { .. }
                | C::InvalidPatch(_)
                | C::DescriptorLayout
                | C::InvalidHeatmap(_)
                | C::NotNormalized { .. }
                | C::InvalidObservation(_)
                | C::Dataset(_)
                | C::Chain(_)
                | C::MuscleConfig(_)
                | C::LossShape(_)
                | C::Sequence(_),
            ) => ExitKind::Data,
            Error::Core(_) | Error::Bench(_) | Error::Stage(_) => ExitKind::Runtime,
        }
    }
}
