use std::path::Path;

/// Exit codes, one per failure class.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_ENDPOINT: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// Input files that exist but cannot be used.
    #[error("invalid input: {0}")]
    Input(String),
    #[error("model endpoint error: {0}")]
    Endpoint(String),
}

impl CliError {
    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } | CliError::Input(_) => EXIT_INPUT,
            CliError::Endpoint(_) => EXIT_ENDPOINT,
        }
    }
}
