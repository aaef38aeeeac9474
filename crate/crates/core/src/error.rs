use thiserror::Error;

/// Errors raised by problems, estimators, optimizers and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid constructor or optimizer settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// The problem does not expose the oracle an operation needs.
    #[error("capability error: problem has no {0} oracle")]
    Capability(&'static str),

    /// An input violates an operation's precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Problem metadata is unusable for the requested computation.
    #[error("metadata error: {0}")]
    Metadata(String),

    /// A parameter schedule is undefined for the requested accuracy.
    #[error("schedule undefined: {0}")]
    Schedule(String),

    /// Malformed numeric input (asymmetric matrix, wrong dimension, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// Non-finite values or a failed factorization.
    #[error("numerical failure{}: {message}", iteration.map(|t| format!(" at iteration {t}")).unwrap_or_default())]
    Numerical {
        iteration: Option<usize>,
        message: String,
    },

    /// A summary statistic could not be evaluated.
    #[error("evaluation error: {0}")]
    Evaluation(String),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            iteration: None,
            message: message.into(),
        }
    }

    /// Attach the optimizer iteration to a numerical failure.
    pub fn at_iteration(self, t: usize) -> Self {
        match self {
            Error::Numerical { message, .. } => Error::Numerical {
                iteration: Some(t),
                message,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
