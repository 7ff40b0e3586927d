use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors split into two families: `Input*` variants describe malformed data
/// or configuration (CLI exit code 2), the rest describe estimation
/// infeasibility on valid data (CLI exit code 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unpopulated cell ({group}, {time})")]
    UnpopulatedCell { group: String, time: i64 },

    #[error("no valid control for ({group}, {time})")]
    NoControl { group: String, time: i64 },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("linear system error: {0}")]
    Linalg(String),

    #[error("logit separation: treatment perfectly predicted by covariates")]
    Separation,

    #[error("logit did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("too few clusters: need at least {needed}, have {got}")]
    TooFewClusters { needed: usize, got: usize },
}

impl Error {
    /// True for errors caused by malformed input or configuration rather
    /// than by an infeasible estimation problem.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Csv(_) | Error::Input(_) | Error::Config(_)
        )
    }

    pub(crate) fn input(msg: impl Into<String>) -> Error {
        Error::Input(msg.into())
    }

    pub(crate) fn estimation(msg: impl Into<String>) -> Error {
        Error::Estimation(msg.into())
    }
}
