use thiserror::Error;

/// Errors raised across the library.
///
/// The variants map onto the CLI exit codes: configuration problems exit
/// with 2, data problems with 3 and numerical failures with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("ambiguous behavior category: {0}")]
    AmbiguousCategory(String),

    #[error("degenerate action grid: {0}")]
    DegenerateGrid(String),

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("absolute continuity violated: {0}")]
    AbsoluteContinuity(String),

    #[error("cross-entropy stalled: {0}")]
    Stall(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::AmbiguousCategory(_) => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            Error::Domain(_)
            | Error::DegenerateGrid(_)
            | Error::InfeasibleScenario(_)
            | Error::AbsoluteContinuity(_)
            | Error::Stall(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
