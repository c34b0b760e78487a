use thiserror::Error;

/// Exit code for a config or parameter that fails validation.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for a numerical method that did not converge.
pub const EXIT_CONVERGENCE: i32 = 3;
/// Exit code for I/O failures and failed self-tests.
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qtherm::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use qtherm::Error as E;
        match self {
            CliError::Config(_) => EXIT_VALIDATION,
            CliError::Core(e) => match e {
                E::Convergence { .. } | E::Window { .. } | E::Conditioning { .. } => EXIT_CONVERGENCE,
                E::Io(_) => EXIT_OTHER,
                _ => EXIT_VALIDATION,
            },
            CliError::Io(_) | CliError::Output(_) => EXIT_OTHER,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), EXIT_VALIDATION);
        assert_eq!(CliError::Core(qtherm::Error::InvalidConfig("x".into())).exit_code(), EXIT_VALIDATION);
        assert_eq!(CliError::Output("x".into()).exit_code(), EXIT_OTHER);
        let io = std::io::Error::other("disk");
        assert_eq!(CliError::Io(io).exit_code(), EXIT_OTHER);
    }
}
