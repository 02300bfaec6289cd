//! Operator surface for `steer-core`: dataset generation, training,
//! Monte-Carlo evaluation, headless simulation, and a live telemetry
//! endpoint.

pub mod commands;
mod error;
pub mod manifest;
pub mod serve;

pub use error::{CliError, CliResult, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC};
