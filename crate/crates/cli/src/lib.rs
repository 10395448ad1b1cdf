//! Scenario files and the experiment runner behind the `stackmf` binary.

pub mod config;
pub mod error;
pub mod presets;
pub mod runner;

pub use config::{load_config, parse_config, save_config, Experiment, ScenarioConfig};
pub use error::CliError;
pub use runner::{run_experiment, RunOptions, RunOutcome, Status};
