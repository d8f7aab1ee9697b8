//! Configuration, sweep orchestration and result persistence for the
//! `paramsim` command-line tool.

pub mod commands;
pub mod config;

pub use commands::{resolve_workers, run, CliError, Command, Invocation, RunOutcome};
pub use config::{parse_config, parse_config_str, ConfigErrors, RunConfig, Violation};
