//! Experiment driver: configuration, artifact layout and the
//! `prepare | train | evaluate | ablate | synth` commands.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{DatasetConfig, DatasetSource, ExperimentConfig};
pub use error::{CliError, CliResult, EXIT_DATA, EXIT_OK, EXIT_TRAINING, EXIT_USAGE};
pub use pipeline::{ablate_all, evaluate_all, prepare, run_all, synth, train};
