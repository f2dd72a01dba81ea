//! Experiment harness behind the `maxsup` binary: `verify`, `train`,
//! `probe` and `compare`.

pub mod compare;
pub mod config;
pub mod probe;
pub mod run;
pub mod verify;

pub use compare::{cmd_compare, run_matrix, CellResult};
pub use config::{DatasetSource, ExperimentConfig, ModelSection};
pub use probe::cmd_probe;
pub use run::{cmd_train, run, run_on, EpochRow, RunOutput, RunSummary};
pub use verify::{run_verification, VerifyOptions, VerifyReport};
