//! Experiment harness: config files, pool priors, the independent-training
//! baseline, metrics, CSV output and the command line.

pub mod baseline;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod output;
pub mod prior;

pub use baseline::run_independent_baseline;
pub use config::{ExperimentConfig, Mode};
pub use experiment::{execute, RunArtifacts};
pub use metrics::{compute_metrics, selection_frequencies, EpochMetrics};
pub use prior::{sample_pool, PoolPrior};
