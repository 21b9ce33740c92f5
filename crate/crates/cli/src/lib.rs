//! Experiment driver: configs, seeded runs, CSV traces, L1-accuracy, SVG
//! charts and the verification sweep.

pub mod accuracy;
pub mod artifacts;
pub mod checks;
pub mod config;
pub mod harness;
pub mod plot;

pub use config::{ConfigError, EnvSpec, ExperimentConfig};
pub use harness::{cmd_run, RunOverrides};
