use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] gpsimplify::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const IO: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => exit::VALIDATION,
            CliError::Core(e) if e.is_numerical() => exit::NUMERICAL,
            CliError::Core(_) => exit::VALIDATION,
            CliError::Json { source, .. } if source.is_io() => exit::IO,
            CliError::Json { .. } => exit::VALIDATION,
            CliError::Io { .. } => exit::IO,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_error_class() {
        assert_eq!(CliError::Validation("n".into()).exit_code(), 2);
        let singular = gpsimplify::Error::Singular { condition: 1e20, nugget: 1e-6 };
        assert_eq!(CliError::from(singular).exit_code(), 3);
        let bad = gpsimplify::Error::InvalidInput("x".into());
        assert_eq!(CliError::from(bad).exit_code(), 2);
        let io = CliError::Io { path: "x".into(), source: std::io::Error::other("disk") };
        assert_eq!(io.exit_code(), 1);
        let parse = serde_json::from_str::<u32>("{").unwrap_err();
        assert_eq!(CliError::Json { path: "c.json".into(), source: parse }.exit_code(), 2);
    }
}
