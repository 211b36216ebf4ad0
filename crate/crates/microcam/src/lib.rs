//! File formats, directory ingestion, run configuration and the command
//! implementations behind the `microcam` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod ingest;

pub use commands::{run, Command};
pub use config::RunConfig;
pub use error::{Failure, Result};
