use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(#[source] enn_core::Error),

    #[error("numerical failure: {0}")]
    Numerical(#[source] enn_core::Error),

    #[error("fixture mismatch: {0}")]
    FixtureMismatch(String),

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Output { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::FixtureMismatch(_) => 5,
        }
    }

    pub(crate) fn output(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Output { path, source }
    }
}

impl From<enn_core::Error> for CliError {
    fn from(e: enn_core::Error) -> Self {
        use enn_core::Error as E;
        match e {
            E::FileNotFound(_)
            | E::Io { .. }
            | E::Parse { .. }
            | E::ColumnMismatch { .. }
            | E::FixtureMissing(_)
            | E::FixtureChecksum { .. } => CliError::Data(e),
            E::LayoutUnresolved { .. } => CliError::FixtureMismatch(e.to_string()),
            E::InvalidArchitecture(msg) => CliError::Config(format!("invalid architecture: {msg}")),
            _ => CliError::Numerical(e),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
