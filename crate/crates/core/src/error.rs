use thiserror::Error;

/// Errors raised by the library. Extended-real results (barrier values at the
/// obstacle) are returned as `f64::INFINITY`, not as errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate smallest eigenvalue (gap {gap:.3e}); enable smoothing or perturb the tensor")]
    DegenerateEigenvalue { gap: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { what: &'static str, iterations: usize, residual: f64 },

    #[error("line search stagnated at iteration {iteration}: step {step:.3e}, energy {energy:.12e}, residual {residual:.3e}")]
    Stagnation { iteration: usize, step: f64, energy: f64, residual: f64 },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
