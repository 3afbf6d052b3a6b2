use thiserror::Error;

use wigner_core::WignerError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("diverged at epoch {epoch} (loss {loss:e})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("interrupted")]
    Interrupted,
    #[error(transparent)]
    Core(#[from] WignerError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged { .. } => 3,
            CliError::Verification(_) => 4,
            CliError::Interrupted => 130,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            CliError::Config(String::new()).exit_code(),
            CliError::Diverged {
                epoch: 0,
                loss: 1.0,
            }
            .exit_code(),
            CliError::Verification(String::new()).exit_code(),
            CliError::Core(WignerError::EmptyBatch).exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4, 1]);
    }
}
