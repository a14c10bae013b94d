//! Experiment harness: configuration, the query-cycle scheduler, metrics,
//! strategy comparison, and supporting machinery.

pub mod config;
mod cycle;
pub mod experiment;
mod fenwick;
pub mod rng;
pub mod world;
pub mod zipf;

pub use config::{ConfigError, ConfigFile, SimConfig, Strategy, CONFIG_FORMAT_VERSION};
pub use experiment::{
    compare_strategies, run_experiment, run_experiments, ComparisonReport, CycleMetrics, EnvInfo,
    ExperimentReport,
};
pub use world::{init_world, OpCounters, World, WorldError};
