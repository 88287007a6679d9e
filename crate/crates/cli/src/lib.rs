//! Command-line harness for the separation library: scenario simulation,
//! separation runs, benchmark sweeps and scoring.

pub mod bench;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod scenario_io;

pub use error::{CliError, CliResult};
