use thiserror::Error;

#[derive(Debug, Error)]
pub enum VpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("derivative order {got} exceeds supported maximum {max}")]
    DerivativeOrder { got: usize, max: usize },
    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),
    #[error("least-squares system is rank deficient or ill conditioned (cond = {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("fixed-point inversion failed to contract at t = {t}: {detail}")]
    InversionDiverged { t: f64, detail: String },
    #[error("numerical abort: {0}")]
    NumericalAbort(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VpError>;
