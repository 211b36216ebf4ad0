use std::path::{Path, PathBuf};

/// Failure of a command, grouped into the categories reported on exit.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    /// Malformed configuration or command line.
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Input files that exist but cannot be understood.
    #[error("{0}")]
    Data(String),
    /// A check ran and said no (e.g. an invalid object/material pair).
    #[error("{0}")]
    Rejected(String),
    #[error(transparent)]
    Core(#[from] microcam_core::Error),
}

pub type Result<T, E = Failure> = std::result::Result<T, E>;

impl Failure {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Failure::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Failure::Rejected(_) => "rejected",
            Failure::Usage(_) => "usage",
            Failure::Io { .. } => "io",
            Failure::Data(_) => "data",
            Failure::Core(e) => match e {
                microcam_core::Error::InvalidArgument(_) => "usage",
                microcam_core::Error::Format(_) | microcam_core::Error::Shape(_) => "data",
                microcam_core::Error::RecognitionFailed { .. } => "rejected",
                _ => "runtime",
            },
        }
    }

    /// Process exit code: 1 rejected, 2 usage, 3 io, 4 data, 5 runtime.
    pub fn exit_code(&self) -> u8 {
        match self.category() {
            "rejected" => 1,
            "usage" => 2,
            "io" => 3,
            "data" => 4,
            _ => 5,
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Data(format!("csv: {e}"))
    }
}
