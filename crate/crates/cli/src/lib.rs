//! Configuration-driven runner for the coupled-lattice quench experiments.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use output::OutputSet;
