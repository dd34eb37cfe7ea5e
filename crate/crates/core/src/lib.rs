//! Exact Gaussian dynamics of two coupled harmonic lattices after a quench,
//! with g-local thermometry, generalized Gibbs ensembles and energy-flow
//! diagnostics.

pub mod energetics;
pub mod equilibration;
pub mod error;
pub mod gaussian;
pub mod gge;
pub mod lattice;
pub mod linalg;
pub mod optimize;
pub mod quench;
pub mod thermometry;

pub use error::{Error, Result};
