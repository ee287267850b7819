//! Configuration, command dispatch, output formats and the run store.

pub mod command;
pub mod config;
pub mod emit;
pub mod store;

pub use command::{execute, run_command, Command, CliError, Outcome, OUT_ENV};
pub use config::{emit_config, parse_model_config, ConfigError, Format, ModelConfig, SweepParams};
pub use emit::{fmt_num, write_csv, CsvRow};
pub use store::{RunManifest, RunStore, StoreError};
