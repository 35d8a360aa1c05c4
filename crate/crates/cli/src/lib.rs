//! Command-line front end for the `nvspin` simulator.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use commands::{run, Cli};
pub use config::ExperimentConfig;
pub use error::CliError;
