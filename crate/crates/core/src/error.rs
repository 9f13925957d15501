use thiserror::Error;

/// Everything that can go wrong in the numerical and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid queue specification: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular linear system in {0}")]
    SingularSystem(&'static str),

    #[error("quadrature failed to reach tolerance {tol:e} on [{a}, {b}]")]
    QuadratureFailure { a: f64, b: f64, tol: f64 },

    #[error("ODE integration failed at t = {t}: {reason}")]
    OdeToleranceFailure { t: f64, reason: String },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("invalid simulation config: {0}")]
    ConfigError(String),

    #[error("job count overflow in replication {0}")]
    Overflow(usize),

    #[error("InsufficientReplications: {got} replications, at least {min} required")]
    InsufficientReplications { got: usize, min: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
