use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by how the command line maps them to exit codes:
/// configuration problems exit 2, resource and sampler-budget problems exit 3,
/// data and numeric problems exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resource budget exceeded: {0}")]
    Resource(String),

    #[error("numeric range error: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("sampler efficiency: {0}")]
    Efficiency(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => 2,
            Error::Resource(_) | Error::Efficiency(_) | Error::Io(_) => 3,
            Error::Data(_) | Error::Numeric(_) | Error::UnsupportedKernel(_) => 4,
        }
    }
}
