use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed eigenvalue vector: lambda[0] must be 1, got {0}")]
    MalformedEigenvalues(f64),

    #[error("probability vector is not normalized: sum = {0}")]
    NotNormalized(f64),

    #[error(
        "kernel pole on axis {axis} at s = {s}: a_k coincides with the waiting-function transform"
    )]
    Pole { axis: usize, s: f64 },

    #[error("Laplace quadrature did not converge at s = {s}; partial estimate {partial}")]
    QuadratureNoConvergence { s: f64, partial: f64 },

    #[error("inverse Laplace transform failed at t = {t}: {reason}")]
    Inversion { t: f64, reason: String },

    #[error("solver blow-up on axis {axis} at t = {t}: |lambda| = {value}")]
    BlowUp { axis: usize, t: f64, value: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
