use thiserror::Error;

/// Errors produced by the projection engine.
#[derive(Debug, Error)]
pub enum Error {
    /// The distribution has fewer than two distinct atoms, so the
    /// log-concave projection is undefined.
    #[error("distribution is not in P1 (fewer than two distinct atoms)")]
    NotInP1,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver did not converge within {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: u32, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
