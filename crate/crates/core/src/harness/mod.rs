//! Benchmark running and metrics.
//!
//! Cost is the total number of tokens processed over every model call of an
//! episode, in thousands; token efficiency is accuracy divided by mean cost.
//! The single-call baseline middle-truncates documents that exceed the model
//! context.

mod baseline;
mod bench;
mod config;
mod metrics;
mod score;

pub use baseline::{
    run_full_context_baseline, truncate_document, BaselineConfig, BaselineError, BaselineRun,
};
pub use bench::{
    load_instances, load_results, run_baseline_benchmark, run_benchmark, BackendFactory,
    BenchConfig, BenchError, BenchmarkReport, EpisodeBackends, InstanceOutcome,
};
pub use config::{ConfigError, HarnessConfig};
pub use metrics::{episode_cost, middle_truncate, token_efficiency, MetricsError};
pub use score::{normalize_answer, score, ScoreError};
