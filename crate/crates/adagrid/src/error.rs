use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] adagrid_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("map file version {found} is not supported (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn in_frame(self, frame: usize) -> Self {
        match self {
            e @ Error::Frame { .. } => e,
            e => Error::Frame {
                frame,
                source: Box::new(e),
            },
        }
    }

    /// Process exit code for the error's category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Core(adagrid_core::Error::Config(_)) => 2,
            Error::Io { .. } => 3,
            Error::Format { .. } | Error::Version { .. } => 4,
            Error::Core(adagrid_core::Error::Input(_)) | Error::Core(adagrid_core::Error::Codec(_)) => 4,
            Error::Core(
                adagrid_core::Error::HeapExhausted { .. }
                | adagrid_core::Error::CapacityExceeded { .. }
                | adagrid_core::Error::SlotFull { .. },
            ) => 5,
            Error::Core(_) => 6,
            Error::Frame { source, .. } => source.exit_code(),
        }
    }
}
