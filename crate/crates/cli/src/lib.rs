//! Library side of the `hedgenet` binary: configuration, run directories
//! and the subcommands.

pub mod commands;
pub mod config;
pub mod output;

pub use config::ExperimentConfig;
