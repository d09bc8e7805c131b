//! Command-line driver: presets, experiment pipelines, CSV/JSON/SVG output.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod repro;
pub mod svg;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
