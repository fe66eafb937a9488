use thiserror::Error;

use crate::tensor::Tensor;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The inner iterative solver hit its iteration cap before reaching the
    /// requested duality gap. The best iterate found is carried along.
    #[error("inner solver not converged after {iters} iterations (relative gap {gap:e})")]
    InnerNotConverged { best: Box<Tensor>, gap: f64, iters: usize },

    #[error("stepsize stagnated at {tau:e} (initial {tau0:e}) at iteration {k}")]
    Stagnation { tau: f64, tau0: f64, k: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}
