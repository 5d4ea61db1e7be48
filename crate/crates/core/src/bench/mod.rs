//! Experiment harness: configuration, data preparation, metrics and CSV output.

pub mod config;
mod experiment;
pub mod metrics;

pub use config::{DatasetSpec, ExperimentConfig};
pub use experiment::{
    prepare_data, run_experiment, write_csv, ExperimentOutcome, PreparedData, SUMMARY_WINDOW,
};
pub use metrics::{detection_metrics, weight_divergence, MetricsRecord};

/// Environment variable naming the worker-pool size for client updates.
pub const WORKERS_ENV: &str = "FEDNOISE_WORKERS";

/// Worker count from [`WORKERS_ENV`]; 0 (the rayon default) when unset or invalid.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}
