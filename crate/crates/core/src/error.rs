use thiserror::Error;

/// Errors raised by the lattice, phase-space and diagnostic routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unstable Hamiltonian: smallest potential eigenvalue {min_eigenvalue:e} is not positive")]
    Unstable { min_eigenvalue: f64 },

    #[error("index {index} out of range for {len} modes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unphysical input: {0}")]
    Unphysical(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(err: ndarray_linalg::error::LinalgError) -> Self {
        Error::Numeric(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
