use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical consistency violated: {0}")]
    NumericalConsistency(String),

    #[error("singular information matrix: {0}")]
    Singular(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used on CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::NumericalConsistency(_) => "numerical",
            Error::Singular(_) => "singular",
            Error::EmptyData(_) => "empty-data",
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
