use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A conditioning event has probability zero.
    #[error("infeasible state: {0}")]
    Infeasible(String),

    #[error("no sequence out of {attempts} unconditional draws met the conditioning event")]
    InsufficientAcceptances { attempts: usize },

    #[error(
        "stage {stage} retained only {retained} sequences (minimum {minimum}); increase N_c"
    )]
    UnderSample {
        stage: usize,
        retained: usize,
        minimum: usize,
    },

    #[error("degenerate scores: {0}")]
    DegenerateScores(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }
}
