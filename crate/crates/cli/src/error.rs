use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fairprice_core::Error),

    #[error("{0}")]
    Config(String),

    #[error("missing artifact {0}")]
    MissingArtifact(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::MissingArtifact(_) => "missing-artifact",
        }
    }

    /// Single-line `error: <kind>: <message>` form printed by the binary.
    pub fn line(&self) -> String {
        let msg = match self {
            // the core messages already carry a variant prefix
            CliError::Core(e) => e.to_string(),
            other => other.to_string(),
        };
        format!("error: {}: {}", self.kind(), msg.replace('\n', " "))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
