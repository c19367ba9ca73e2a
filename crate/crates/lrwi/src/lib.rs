//! File formats, configuration and experiment commands on top of `lrwi-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pgm;

pub use commands::{execute, Command};
pub use error::{CliError, CliResult};
