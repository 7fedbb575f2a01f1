//! Subcommands of the `morphcritic` binary.

pub mod config;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod plot;
pub mod probe;
pub mod train;

pub use config::RunConfig;
pub use error::{CliError, Result};
