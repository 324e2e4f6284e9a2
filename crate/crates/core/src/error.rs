use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid Hilbert space: {0}")]
    InvalidSpace(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite matrix entries ({0})")]
    NonFinite(&'static str),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("Dyson map is not bounded ({0}); pass the expert override to proceed anyway")]
    Unbounded(String),

    #[error("operator is not Hermitian (defect {defect:.3e} exceeds {tolerance:.1e})")]
    NotHermitian { defect: f64, tolerance: f64 },

    #[error("degenerate sector n = {n}: Omega_n = {omega:.3e}")]
    DegenerateSector { n: usize, omega: f64 },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("evolution failed: {0}")]
    Evolution(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
