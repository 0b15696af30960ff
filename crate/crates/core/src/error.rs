use std::path::PathBuf;

/// Errors raised across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is missing or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A strategy returned a pull set the engine cannot honor.
    #[error("contract violation by agent {agent} at stage {stage}: {reason}")]
    ContractViolation {
        agent: usize,
        stage: usize,
        reason: String,
    },

    /// A structured file failed to parse.
    #[error("{path}: line {line}, field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    /// The penalized likelihood has no finite minimizer.
    #[error("refusing to fit: {0}")]
    Separable(String),

    /// An iterative solver hit its iteration cap.
    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        last_iterate: Vec<f64>,
    },

    /// Exhaustive search was asked to enumerate too many subsets.
    #[error("instance too large: {size} items exceeds the limit of {limit}")]
    TooLarge { size: usize, limit: usize },

    /// Preference orders contain ties or unknown ids.
    #[error("invalid preferences: {0}")]
    Preferences(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
