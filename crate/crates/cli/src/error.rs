use std::path::PathBuf;

use bss_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("unknown algorithm `{0}`")]
    UnknownAlgo(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    At { path: PathBuf, source: CoreError },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn at(path: impl Into<PathBuf>) -> impl FnOnce(CoreError) -> CliError {
        let path = path.into();
        move |source| CliError::At { path, source }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 2 usage, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::UnknownAlgo(_) => EXIT_USAGE,
            CliError::Core(e) | CliError::At { source: e, .. } => core_exit_code(e),
            CliError::Csv(_) | CliError::Io { .. } => EXIT_DATA,
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::SingularMatrix | CoreError::NotPositiveDefinite | CoreError::DegenerateDirection => EXIT_NUMERICAL,
        CoreError::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}
