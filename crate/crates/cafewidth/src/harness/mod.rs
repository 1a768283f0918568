//! Experiment harness behind the command-line interface: configuration
//! files, command implementations, and machine-readable reporting
//! (result documents, manifests, timing files, CSV series).

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{run_command, Command};
pub use config::{ArchSource, BudgetSpec, ExperimentConfig, LoadedConfig, Overrides};
pub use report::{validate_against_schema, ResultEnvelope, RESULT_SCHEMA};
