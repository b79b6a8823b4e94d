//! Command-line frontend for `sketchdecomp`: simulate a trace, detect loss
//! from its sketches, and evaluate the report against ground truth.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_detect, cmd_evaluate, cmd_run, cmd_simulate, OutputOptions};
pub use config::{Overrides, RunConfig};
pub use error::CliError;
