use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("state is not normalized: ||u|| = {norm}, expected 1 within {tol}")]
    NotNormalized { norm: f64, tol: f64 },
    #[error("non-finite value encountered at t = {t}: {context}")]
    NonFinite { t: f64, context: String },
    #[error("operator failed {check} check: defect {defect:.3e} exceeds {tol:.3e}")]
    OperatorCheck {
        check: &'static str,
        defect: f64,
        tol: f64,
    },
    #[error("symplectic defect {defect:.3e} exceeds {tol:.3e} at t = {t}; reduce dt")]
    SymplecticBlowup { defect: f64, tol: f64, t: f64 },
    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),
    #[error("space dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("Krylov propagation failed: {0}")]
    KrylovFailure(String),
    #[error("mode sets misaligned: {0}")]
    ModeMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
