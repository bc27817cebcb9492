use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric blow-up: {0}")]
    BlowUp(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit status: 2 config, 3 blow-up, 4 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::BlowUp(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<gradflow::Error> for CliError {
    fn from(e: gradflow::Error) -> Self {
        match e {
            gradflow::Error::BlowUp { .. } => CliError::BlowUp(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
