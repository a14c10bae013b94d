//! Command-line front end: run experiments, compare strategies, plan
//! verification and maintainer-group parameters, and inspect social
//! graphs.

use clap::{Args, Parser, Subcommand};
use green::filtering::{self, FilterParams};
use green::harness::{
    compare_strategies, run_experiment, ConfigFile, SimConfig, Strategy,
};
use green::socialgraph;
use green::verification::plan_verification;
use rand_chacha::rand_core::SeedableRng;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "green",
    about = "Deterministic simulator for a pollution-resistant P2P content sharing protocol",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv and report.json.
    Run(RunArgs),
    /// Run several strategies on identically seeded worlds and write
    /// comparison.csv and report.json.
    Compare(CompareArgs),
    /// Plan probabilistic verification: blocks to verify for a target
    /// expected false positive rate.
    PlanVerify(PlanVerifyArgs),
    /// Plan the maintainer-group size for a worst-case malicious fraction.
    PlanGroup(PlanGroupArgs),
    /// Print node/edge/degree/label statistics of a social graph as JSON.
    GraphStats(GraphStatsArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file (TOML); defaults come from the chosen preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset: desk-decoy or desk-identifier.
    #[arg(long, default_value = "desk-decoy")]
    preset: String,
    /// Override the RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the strategy (green, green-nonsocial, credence,
    /// credence-social, baseline).
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Override the polluter fraction.
    #[arg(long)]
    beta: Option<f64>,
    /// Override the user count.
    #[arg(long)]
    users: Option<u32>,
    /// Override the file count.
    #[arg(long)]
    files: Option<u32>,
    /// Override the experimental cycle count.
    #[arg(long)]
    experimental_cycles: Option<u32>,
    /// Override the query cycles per experimental cycle.
    #[arg(long)]
    query_cycles: Option<u64>,
    /// Override the expected false positive rate of verification.
    #[arg(long)]
    efpr: Option<f64>,
    /// Override the voting probability.
    #[arg(long)]
    p_o: Option<f64>,
    /// Override the deleting probability.
    #[arg(long)]
    p_d: Option<f64>,
    /// Load the social graph from an edge-list trace instead of
    /// synthesizing one.
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl ConfigArgs {
    fn build(&self) -> Result<SimConfig, String> {
        let mut cfg = match self.config.as_deref() {
            Some(path) => ConfigFile::load(path).map_err(|e| e.to_string())?,
            None => match self.preset.as_str() {
                "desk-decoy" => SimConfig::desk_decoy(),
                "desk-identifier" => SimConfig::desk_identifier(),
                other => {
                    return Err(format!(
                        "unknown preset {other:?} (expected desk-decoy or desk-identifier)"
                    ))
                }
            },
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(strategy) = self.strategy {
            cfg.strategy = strategy;
        }
        if let Some(beta) = self.beta {
            cfg.beta = beta;
        }
        if let Some(users) = self.users {
            cfg.user_count = users;
        }
        if let Some(files) = self.files {
            cfg.file_count = files;
        }
        if let Some(cycles) = self.experimental_cycles {
            cfg.experimental_cycles = cycles;
        }
        if let Some(q) = self.query_cycles {
            cfg.query_cycles_per_experimental_cycle = q;
        }
        if let Some(efpr) = self.efpr {
            cfg.efpr = efpr;
        }
        if let Some(p_o) = self.p_o {
            cfg.vote_probability = p_o;
        }
        if let Some(p_d) = self.p_d {
            cfg.delete_probability = p_d;
        }
        if let Some(trace) = &self.trace {
            cfg.trace_path = Some(trace.clone());
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long, default_value = "runs/out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated strategy list.
    #[arg(long, value_delimiter = ',', default_value = "green,baseline")]
    strategies: Vec<Strategy>,
    /// Output directory.
    #[arg(long, default_value = "runs/compare")]
    out: PathBuf,
}

#[derive(Args)]
struct PlanVerifyArgs {
    /// Total data blocks of a version.
    #[arg(long)]
    blocks: u32,
    /// Assumed minimum corrupted blocks in a polluted download.
    #[arg(long)]
    polluted_min: u32,
    /// Expected false positive rate.
    #[arg(long)]
    efpr: f64,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PlanGroupArgs {
    /// Worst-case fraction of malicious and compromised users.
    #[arg(long)]
    beta_worst: f64,
    /// Target probability that a group keeps an honest majority.
    #[arg(long)]
    target: f64,
    /// Largest group size to consider.
    #[arg(long, default_value_t = filtering::DEFAULT_GROUP_SIZE_CAP)]
    cap: usize,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GraphStatsArgs {
    /// Edge-list trace to load.
    #[arg(long, conflicts_with_all = ["users", "degree"])]
    trace: Option<PathBuf>,
    /// Users in a synthetic small-world graph.
    #[arg(long)]
    users: Option<u32>,
    /// Mean friend degree of the synthetic graph (even).
    #[arg(long, default_value_t = 8)]
    degree: u32,
    /// Polluter fraction for labeling; omit to leave the graph unlabeled.
    #[arg(long)]
    beta: Option<f64>,
    /// Genuine group count for labeling.
    #[arg(long, default_value_t = 50)]
    groups: u32,
    /// RNG seed for synthesis and labeling.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config.build()?;
            let report = run_experiment(cfg).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
            let csv_path = args.out.join("metrics.csv");
            let json_path = args.out.join("report.json");
            std::fs::write(&csv_path, report.metrics_csv()).map_err(|e| e.to_string())?;
            std::fs::write(&json_path, report.to_json()).map_err(|e| e.to_string())?;
            println!(
                "strategy {} seed {}: final fraction of authentic downloads {:.4} ({} cycles, {} ms)",
                report.config.strategy,
                report.config.seed,
                report.final_fraction(),
                report.metrics.len(),
                report.wall_clock_ms
            );
            println!("wrote {} and {}", csv_path.display(), json_path.display());
            Ok(())
        }
        Command::Compare(args) => {
            let cfg = args.config.build()?;
            let report =
                compare_strategies(cfg, &args.strategies).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
            let csv_path = args.out.join("comparison.csv");
            let json_path = args.out.join("report.json");
            std::fs::write(&csv_path, report.comparison_csv()).map_err(|e| e.to_string())?;
            std::fs::write(&json_path, report.to_json()).map_err(|e| e.to_string())?;
            for run in &report.runs {
                println!(
                    "{:<16} final fraction {:.4}",
                    run.config.strategy.name(),
                    run.final_fraction()
                );
            }
            println!("wrote {} and {}", csv_path.display(), json_path.display());
            Ok(())
        }
        Command::PlanVerify(args) => {
            let plan = plan_verification(args.blocks, args.polluted_min, args.efpr)
                .map_err(|e| e.to_string())?;
            if args.json {
                println!(
                    "{}",
                    json!({
                        "blocks": plan.block_count,
                        "polluted_min": plan.polluted_min,
                        "efpr": plan.efpr,
                        "v_min": plan.v_min,
                        "achieved_fpr": plan.achieved_fpr,
                    })
                );
            } else {
                println!(
                    "verify {} of {} blocks: achieved false positive rate {:.6} (target {})",
                    plan.v_min, plan.block_count, plan.achieved_fpr, plan.efpr
                );
            }
            Ok(())
        }
        Command::PlanGroup(args) => {
            let m = filtering::min_group_size(args.beta_worst, args.target, args.cap)
                .map_err(|e| e.to_string())?;
            let reliability = filtering::group_reliability(&FilterParams {
                m,
                beta: args.beta_worst,
            })
            .map_err(|e| e.to_string())?;
            if args.json {
                println!(
                    "{}",
                    json!({
                        "beta_worst": args.beta_worst,
                        "target": args.target,
                        "group_size": m,
                        "reliability": reliability,
                    })
                );
            } else {
                println!(
                    "group size {m}: honest-majority probability {reliability:.6} at beta {}",
                    args.beta_worst
                );
            }
            Ok(())
        }
        Command::GraphStats(args) => {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(args.seed);
            let mut graph = match (&args.trace, args.users) {
                (Some(path), _) => socialgraph::load_trace(path).map_err(|e| e.to_string())?,
                (None, Some(users)) => socialgraph::synth_graph(users, args.degree, &mut rng)
                    .map_err(|e| e.to_string())?,
                (None, None) => {
                    return Err("pass --trace FILE or --users N".into());
                }
            };
            if let Some(beta) = args.beta {
                socialgraph::label_population(
                    &mut graph,
                    args.groups,
                    1.0 - beta,
                    1.0,
                    socialgraph::DEFAULT_RESEED_CAP,
                    &mut rng,
                )
                .map_err(|e| e.to_string())?;
            }
            let stats = graph.stats();
            println!(
                "{}",
                serde_json::to_string_pretty(&stats).map_err(|e| e.to_string())?
            );
            Ok(())
        }
    }
}
