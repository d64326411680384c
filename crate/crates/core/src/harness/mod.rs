//! Experiment configuration, the standard monitoring task, experiment
//! drivers and result files.

pub mod config;
pub mod experiment;
pub mod output;
pub mod task;

use thiserror::Error;

pub use config::{ConfigError, ExperimentSpec, TaskKind, TaskSpec, TrainingProtocol, Variant, DEFAULT_CONFIG};
pub use experiment::{
    probe_policy, run_ablation, run_simulation, run_stages_experiment, run_threshold, train, variant_config,
    AblationReport, AblationRow, Measurement, ProbeRow, SeedStages, StageReport,
};
pub use task::build_monitoring_task;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {message}")]
    Run { context: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}
