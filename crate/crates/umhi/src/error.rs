use std::path::{Path, PathBuf};

/// Errors of the command-line pipeline. [`CliError::exit_code`] maps them to
/// process exit codes: 1 for usage problems, 2 for data problems.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{path}: missing input artifact")]
    MissingInput { path: PathBuf },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: expected format `{expected}` version {expected_version}, found `{found}` version {found_version}")]
    Version { path: PathBuf, expected: String, expected_version: u32, found: String, found_version: u32 },
    #[error("{path}: checksum does not match the one recorded by the model")]
    Checksum { path: PathBuf },
    #[error(transparent)]
    Core(#[from] umhi_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::UnknownKey(_) | CliError::BadValue { .. } => 1,
            _ => 2,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput { path: path.to_path_buf() }
        } else {
            CliError::Io { path: path.to_path_buf(), source }
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        CliError::Format { path: path.to_path_buf(), message: message.into() }
    }

    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.to_path_buf(), line, message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
