//! Command-line harness: natural and robust training, attacks, evaluation and
//! step-size sweeps over datasets in the neutral format.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::{Flags, RunConfig};
pub use error::{CliError, Result};
pub use report::RunReport;
