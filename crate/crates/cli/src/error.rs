use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config file or parameter values: exit code 1.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Library(#[from] dpagd::Error),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Library(
                dpagd::Error::InvalidParameter { .. } | dpagd::Error::ParameterInfeasible { .. },
            ) => 1,
            CliError::Library(_) | CliError::Io(_) => 2,
        }
    }
}
