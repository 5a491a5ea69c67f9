//! Batch front end for `rbto-core`: configuration files, presets, run
//! directories and artifact files.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod run;

pub use config::{ProblemKind, RunConfig};
pub use error::{CliError, Result};
pub use run::{run, sweep, Mode};
