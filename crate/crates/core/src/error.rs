use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{func}: {msg}")]
    Domain { func: &'static str, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e}, tolerance {tol:.1e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        tol: f64,
        history: Vec<f64>,
    },

    #[error(
        "{solver} became unstable at iteration {iteration}: {reason}; reduce the damping factor"
    )]
    Instability {
        solver: &'static str,
        iteration: usize,
        reason: String,
        history: Vec<f64>,
    },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("{0} is undefined: background vanishes")]
    Undefined(String),
}

impl Error {
    pub(crate) fn domain(func: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            func,
            msg: msg.into(),
        }
    }

    /// Residual history of a failed iteration, when one exists.
    pub fn history(&self) -> Option<&[f64]> {
        match self {
            Error::NotConverged { history, .. } | Error::Instability { history, .. } => {
                Some(history)
            }
            _ => None,
        }
    }
}
