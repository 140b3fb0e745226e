use std::path::PathBuf;

use coalmap_core::error::ErrorKind;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] coalmap_core::Error),
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    fn kind(&self) -> ErrorKind {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => ErrorKind::Config,
            CliError::Io { .. } => ErrorKind::Io,
            CliError::Csv { source, .. } if source.is_io_error() => ErrorKind::Io,
            CliError::Csv { .. } | CliError::Data(_) => ErrorKind::Data,
        }
    }

    /// 2 bad configuration, 3 I/O failure, 4 data invariant violation.
    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Io => 3,
            ErrorKind::Data => 4,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind() {
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
            ErrorKind::Data => "data",
        }
    }

    /// `error code=<n> kind=<kind>: <message>` on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!(
            "error code={} kind={}: {msg}",
            self.exit_code(),
            self.kind_name()
        )
    }
}
