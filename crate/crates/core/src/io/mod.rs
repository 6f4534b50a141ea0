//! Data loading, run configuration, report writing and the command line.

pub mod cli;
pub mod config;
pub mod data;
pub mod format;
pub mod report;

pub use cli::{run_cli, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK};
pub use config::{OutputFormat, RunConfig, SpecSelection};
pub use data::{load_series, write_series};
pub use report::{write_reports, FittedModel, Manifest, RunOutput};
