//! Experiment driver: run configs, training across seeds, checkpoint
//! evaluation, ablation presets, learning-curve aggregation and SVG plots.

pub mod ablation;
pub mod commands;
pub mod config;
pub mod curves;
mod error;
pub mod plot;

pub use ablation::{ablate, config_diff, AblationPreset, AblationRegistry};
pub use commands::{
    baseline, evaluate, graph_dump, override_env, replay, rollout, train, Episode, EpisodeSource, RunSummary, SeedRun,
};
pub use config::RunConfig;
pub use curves::{aggregate, learning_curve, parse_aggregate_csv, AggregatePoint};
pub use error::{CliError, Result};
pub use plot::render_svg;

/// Logging controlled by `MARC_LOG_LEVEL` (error, warn, info, debug, trace).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("MARC_LOG_LEVEL", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
