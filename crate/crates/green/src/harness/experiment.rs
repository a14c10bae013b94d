//! Experiment execution and reporting: single runs, strategy comparison
//! matrices, CSV metrics and JSON reports.

use crate::harness::config::{ConfigError, SimConfig, Strategy};
use crate::harness::world::{init_world, CycleCounters, OpCounters, WorldError};
use serde::Serialize;
use std::fmt::Write as _;
use std::time::Instant;

/// Per-experimental-cycle results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleMetrics {
    pub experimental_cycle: u32,
    pub authentic_downloads: u64,
    pub total_downloads: u64,
    pub fraction_authentic: f64,
    pub failed_queries: u64,
    pub polluted_accepted: u64,
    pub polluted_attempts: u64,
}

impl CycleMetrics {
    fn from_counters(cycle: u32, c: CycleCounters) -> Self {
        CycleMetrics {
            experimental_cycle: cycle,
            authentic_downloads: c.authentic_downloads,
            total_downloads: c.total_downloads,
            fraction_authentic: if c.total_downloads > 0 {
                c.authentic_downloads as f64 / c.total_downloads as f64
            } else {
                0.0
            },
            failed_queries: c.failed_queries,
            polluted_accepted: c.polluted_accepted,
            polluted_attempts: c.polluted_attempts,
        }
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{},{},{}",
            self.experimental_cycle,
            self.authentic_downloads,
            self.total_downloads,
            self.fraction_authentic,
            self.failed_queries,
            self.polluted_accepted,
            self.polluted_attempts
        )
    }
}

const METRICS_HEADER: &str = "experimental_cycle,authentic_downloads,total_downloads,\
fraction_authentic,failed_queries,polluted_accepted,polluted_attempts";

/// Host details echoed into reports.
#[derive(Debug, Clone, Serialize)]
pub struct EnvInfo {
    pub os: &'static str,
    pub arch: &'static str,
}

impl EnvInfo {
    fn current() -> Self {
        EnvInfo {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
        }
    }
}

/// Results of one experiment run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: SimConfig,
    pub metrics: Vec<CycleMetrics>,
    pub op_counters: OpCounters,
    pub environment: EnvInfo,
    pub wall_clock_ms: u64,
}

impl ExperimentReport {
    /// Fraction of authentic downloads in the final experimental cycle.
    pub fn final_fraction(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.fraction_authentic)
    }

    /// Polluted acceptances and attempts totalled over the whole run.
    pub fn polluted_acceptance_rate(&self) -> Option<f64> {
        let attempts: u64 = self.metrics.iter().map(|m| m.polluted_attempts).sum();
        let accepted: u64 = self.metrics.iter().map(|m| m.polluted_accepted).sum();
        (attempts > 0).then(|| accepted as f64 / attempts as f64)
    }

    pub fn total_polluted_attempts(&self) -> u64 {
        self.metrics.iter().map(|m| m.polluted_attempts).sum()
    }

    pub fn total_polluted_accepted(&self) -> u64 {
        self.metrics.iter().map(|m| m.polluted_accepted).sum()
    }

    /// The deterministic metrics CSV (one row per experimental cycle).
    /// Timings and environment stay out of this file on purpose.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for row in &self.metrics {
            out.push_str(&row.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs one experiment to completion.
pub fn run_experiment(cfg: SimConfig) -> Result<ExperimentReport, WorldError> {
    let start = Instant::now();
    let mut world = init_world(cfg.clone())?;
    let mut metrics = Vec::with_capacity(cfg.experimental_cycles as usize);
    for cycle in 0..cfg.experimental_cycles {
        for _ in 0..cfg.query_cycles_per_experimental_cycle {
            world.run_query_cycle();
        }
        let counters = world.drain_cycle_counters();
        metrics.push(CycleMetrics::from_counters(cycle, counters));
    }
    Ok(ExperimentReport {
        config: cfg,
        metrics,
        op_counters: world.op_counters,
        environment: EnvInfo::current(),
        wall_clock_ms: start.elapsed().as_millis() as u64,
    })
}

/// Runs several independent experiments, a few at a time.
pub fn run_experiments(configs: Vec<SimConfig>) -> Result<Vec<ExperimentReport>, WorldError> {
    let parallelism = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let mut reports: Vec<Option<ExperimentReport>> = Vec::new();
    reports.resize_with(configs.len(), || None);
    let mut error: Option<WorldError> = None;

    for (chunk_start, chunk) in configs
        .chunks(parallelism.max(1))
        .enumerate()
        .map(|(i, c)| (i * parallelism.max(1), c))
    {
        let results: Vec<(usize, Result<ExperimentReport, WorldError>)> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .enumerate()
                    .map(|(offset, cfg)| {
                        let cfg = cfg.clone();
                        scope.spawn(move || (chunk_start + offset, run_experiment(cfg)))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("experiment thread panicked"))
                    .collect()
            });
        for (index, result) in results {
            match result {
                Ok(report) => reports[index] = Some(report),
                Err(e) => error = Some(e),
            }
        }
        if error.is_some() {
            break;
        }
    }
    if let Some(e) = error {
        return Err(e);
    }
    Ok(reports.into_iter().map(|r| r.expect("filled")).collect())
}

/// Results of a strategy comparison under identical seeds and world
/// initialization.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub config: SimConfig,
    pub runs: Vec<ExperimentReport>,
}

impl ComparisonReport {
    pub fn run_for(&self, strategy: Strategy) -> Option<&ExperimentReport> {
        self.runs.iter().find(|r| r.config.strategy == strategy)
    }

    /// Long-format CSV: one row per experimental cycle per strategy.
    pub fn comparison_csv(&self) -> String {
        let mut out = String::from("strategy,");
        out.push_str(METRICS_HEADER);
        out.push('\n');
        for run in &self.runs {
            for row in &run.metrics {
                let _ = writeln!(out, "{},{}", run.config.strategy.name(), row.csv_row());
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs each strategy on an identically seeded and initialized world.
pub fn compare_strategies(
    cfg: SimConfig,
    strategies: &[Strategy],
) -> Result<ComparisonReport, WorldError> {
    if strategies.len() < 2 {
        return Err(WorldError::Config(ConfigError::Invalid(
            "a comparison needs at least two strategies".into(),
        )));
    }
    let configs: Vec<SimConfig> = strategies
        .iter()
        .map(|&strategy| cfg.clone().with_strategy(strategy))
        .collect();
    let runs = run_experiments(configs)?;
    Ok(ComparisonReport { config: cfg, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> SimConfig {
        SimConfig {
            user_count: 120,
            synth_friend_degree: 4,
            genuine_group_count: 5,
            file_count: 8,
            versions_per_file: 4,
            authentic_shares_per_genuine: 3,
            experimental_cycles: 3,
            query_cycles_per_experimental_cycle: 400,
            friend_db_refresh_period: 300,
            scenario: crate::adversary::AttackScenario {
                polluted_versions_per_polluter: 6,
                ..crate::adversary::AttackScenario::decoy_insertion()
            },
            ..SimConfig::default()
        }
    }

    #[test]
    fn metrics_row_count_matches_cycles() {
        let report = run_experiment(tiny_cfg()).unwrap();
        assert_eq!(report.metrics.len(), 3);
        for row in &report.metrics {
            assert!(row.authentic_downloads <= row.total_downloads);
            assert_eq!(
                row.total_downloads - row.authentic_downloads,
                row.polluted_accepted
            );
        }
        let csv = report.metrics_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("experimental_cycle,"));
    }

    #[test]
    fn degenerate_run_yields_zero_rows() {
        let mut cfg = tiny_cfg();
        cfg.experimental_cycles = 1;
        cfg.query_cycles_per_experimental_cycle = 0;
        let report = run_experiment(cfg).unwrap();
        assert_eq!(report.metrics.len(), 1);
        assert_eq!(report.metrics[0].total_downloads, 0);
        assert_eq!(report.metrics[0].fraction_authentic, 0.0);
        assert!(!report.to_json().is_empty());
    }

    #[test]
    fn identical_seeds_give_byte_identical_csv() {
        let a = run_experiment(tiny_cfg()).unwrap();
        let b = run_experiment(tiny_cfg()).unwrap();
        assert_eq!(a.metrics_csv(), b.metrics_csv());
    }

    #[test]
    fn baseline_never_touches_reputation() {
        let cfg = tiny_cfg().with_strategy(Strategy::Baseline);
        let report = run_experiment(cfg).unwrap();
        assert_eq!(report.op_counters.reputation_scores, 0);
        assert_eq!(report.op_counters.quick_estimate_hits, 0);
        assert_eq!(report.op_counters.correlation_computations, 0);
        assert_eq!(report.op_counters.filtered_queries, 0);

        let green = run_experiment(tiny_cfg()).unwrap();
        assert!(green.op_counters.reputation_scores > 0);
        assert!(green.op_counters.filtered_queries > 0);
    }

    #[test]
    fn comparison_against_itself_is_identical() {
        let report = compare_strategies(tiny_cfg(), &[Strategy::Green, Strategy::Green]).unwrap();
        assert_eq!(report.runs[0].metrics, report.runs[1].metrics);
        let csv = report.comparison_csv();
        assert!(csv.starts_with("strategy,experimental_cycle,"));
        assert_eq!(csv.lines().count(), 1 + 2 * 3);
    }

    #[test]
    fn comparison_needs_two_strategies() {
        assert!(compare_strategies(tiny_cfg(), &[Strategy::Green]).is_err());
    }

    #[test]
    fn corrupted_maintainer_path_runs() {
        let mut cfg = tiny_cfg();
        cfg.scenario.maintainer_corruption_rate = 0.5;
        cfg.experimental_cycles = 1;
        cfg.query_cycles_per_experimental_cycle = 300;
        let report = run_experiment(cfg).unwrap();
        assert!(report.metrics[0].total_downloads > 0);
    }
}
