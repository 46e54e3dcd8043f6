//! Experiment configuration, table runs and result emission for the firm
//! model.

pub mod cli;
pub mod config;
pub mod emit;
pub mod run;

pub use config::{parse_config, ConfigError, ExperimentConfig, OutputFormat};
pub use emit::{emit_table, format_sig10};
pub use run::{run_table, ResultRow};
