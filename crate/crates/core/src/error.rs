use thiserror::Error;

/// Errors raised by net construction, pricing, simulation and fitting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid time-net: {0}")]
    InvalidNet(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error(
        "pricing function evaluated at t = {t} with T - t = {remaining:e} below the maturity floor"
    )]
    TooCloseToMaturity { t: f64, remaining: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("model and pricing are incompatible: {0}")]
    Incompatible(String),

    #[error("exact sampling is not available for general coefficients; use the Euler scheme")]
    ExactSamplingUnavailable,

    #[error("degenerate regression input: {0}")]
    DegenerateFit(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
