use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (asymmetric matrix, wrong sparsity, bad shape).
    #[error("structural error: {0}")]
    Structural(String),
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("singular evaluation point: {0}")]
    Singular(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
