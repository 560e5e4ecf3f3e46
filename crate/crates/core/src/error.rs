use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("evaluation error: non-finite multiplier value at mode {mode} (xi = {xi})")]
    Evaluation { mode: i64, xi: f64 },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("series did not converge: {0}")]
    Convergence(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("instability at step {step}: amplitude {amplitude:e} exceeds 1e12")]
    Instability { step: usize, amplitude: f64 },

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    /// Errors that stem from overflow or unstable evolution rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Overflow(_)
                | Error::Convergence(_)
                | Error::Quadrature(_)
                | Error::Range(_)
                | Error::Numerical(_)
                | Error::Instability { .. }
                | Error::Evaluation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
