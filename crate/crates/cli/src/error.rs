use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{task}: {source}")]
    Numerical {
        task: String,
        #[source]
        source: bulkdiff::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{failed} of {total} self-test checks failed")]
    SelfTest { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { source, .. } => match source {
                bulkdiff::Error::InvalidParameter { .. } => 2,
                _ => 3,
            },
            CliError::Io { .. } => 3,
            CliError::SelfTest { .. } => 4,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Tags a core error with the task that raised it.
pub trait TaskContext<T> {
    fn task(self, name: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> TaskContext<T> for bulkdiff::Result<T> {
    fn task(self, name: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Numerical { task: name(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let numerical: bulkdiff::Result<()> = Err(bulkdiff::Error::SingularSystem { dim: 3 });
        assert_eq!(numerical.task(|| "abar m=2".into()).unwrap_err().exit_code(), 3);
        let e = bulkdiff::Error::InvalidParameter {
            name: "rho",
            reason: "negative".into(),
        };
        let invalid: bulkdiff::Result<()> = Err(e);
        let err = invalid.task(|| "abar".into()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().starts_with("abar: "));
        assert_eq!(CliError::SelfTest { failed: 1, total: 9 }.exit_code(), 4);
    }
}
