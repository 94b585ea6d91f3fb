//! Benchmark experiments, artifact formats and the command line for
//! `fbcontrol-core`.

pub mod error;
pub mod experiment;
pub mod io;

pub use error::CliError;
pub use experiment::{
    build_example, check_state, run_experiment, CheckResult, Example, ExperimentResult, ExperimentSpec,
};
pub use io::{write_artifacts, SavedState, Summary};
