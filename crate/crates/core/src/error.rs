use thiserror::Error;

/// Failures raised by table construction, the step kernel and the reference machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Gauss-Legendre rule with {k} nodes failed: {reason}")]
    Quadrature { k: usize, reason: String },

    #[error("multiplier system singular (stepsize too large or constraints not regular)")]
    SingularMultiplierSystem,

    #[error("constraint regularity violated: grad g^T M^-1 grad g is singular")]
    RegularityViolation,

    #[error("fixed-point iteration did not converge after {iters} sweeps (last increment {increment:e})")]
    NotConverged { iters: usize, increment: f64 },

    #[error("the problem does not supply the constraint Hessian action")]
    MissingHessian,

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;
