//! Configuration, orchestration and output for exterior NLS experiments.

pub mod config;
pub mod experiment;

pub use config::{canned, ExperimentConfig, VarianceC, CANNED};
pub use experiment::{run_convergence, run_experiment, ExperimentResult, RunError, OUTPUT_DIR_ENV, OUTPUT_FILES};
