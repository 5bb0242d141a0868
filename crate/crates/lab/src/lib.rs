//! Experiment runner for the width SDE: JSON configuration, parallel
//! ensembles, CSV/JSON artifacts and the `width-sde` command line.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod pool;
pub mod run;

pub use config::{parse_config, ExperimentConfig, Subcommand};
pub use error::{LabError, LabResult};
pub use run::{run, RunReport, EXIT_CLAIM_FAILED, EXIT_ERROR, EXIT_OK};
