//! Experiment harness for the `sapalm` solver: configuration, trace output,
//! speedup tables and verification suites.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod oracle;
pub mod speedup;
pub mod verify;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, Artifacts};
pub use speedup::{speedup_table, SpeedupReport};
pub use verify::{run_suite, Suite};
