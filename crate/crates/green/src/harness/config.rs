//! Experiment configuration: every tunable of the simulation, with
//! defaults mirroring the desk-scale decoy-insertion preset.

use crate::adversary::{AttackKind, AttackScenario};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

/// Scoring and selection pipeline run by genuine requestors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Full pipeline: redundant filtering, social reputation, realtime
    /// probabilistic verification.
    Green,
    /// Green without the social enhancement (no vote-history extension,
    /// no friend-vote quick estimate).
    GreenNonsocial,
    /// Correlation-weighted reputation alone: single-maintainer queries,
    /// no verification while downloading.
    Credence,
    /// Credence plus the social enhancement.
    CredenceSocial,
    /// Selection proportional to provider count only.
    Baseline,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Green,
        Strategy::GreenNonsocial,
        Strategy::Credence,
        Strategy::CredenceSocial,
        Strategy::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Green => "green",
            Strategy::GreenNonsocial => "green-nonsocial",
            Strategy::Credence => "credence",
            Strategy::CredenceSocial => "credence-social",
            Strategy::Baseline => "baseline",
        }
    }

    pub fn uses_reputation(self) -> bool {
        !matches!(self, Strategy::Baseline)
    }

    pub fn uses_social(self) -> bool {
        matches!(self, Strategy::Green | Strategy::CredenceSocial)
    }

    pub fn verifies_downloads(self) -> bool {
        matches!(self, Strategy::Green | Strategy::GreenNonsocial)
    }

    /// How many maintainers a requestor queries: the full redundant group
    /// for the filtering strategies, one otherwise.
    pub fn query_redundancy(self, m: usize) -> usize {
        match self {
            Strategy::Green | Strategy::GreenNonsocial => m,
            _ => 1,
        }
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|strategy| strategy.name() == s)
            .ok_or_else(|| ConfigError::UnknownStrategy(s.to_string()))
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown strategy {0:?} (expected green, green-nonsocial, credence, credence-social or baseline)")]
    UnknownStrategy(String),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported config format version {0} (expected {CONFIG_FORMAT_VERSION})")]
    UnsupportedVersion(u32),
}

/// All simulation tunables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Maintainer-group size (files and vote histories alike).
    pub maintainer_group_size: usize,
    /// Fraction of users that are polluters.
    pub beta: f64,
    /// Attenuation applied to friends' vote histories.
    pub gamma: f64,
    /// Probability that a genuine user votes on a downloaded version.
    pub vote_probability: f64,
    /// Probability that a genuine user deletes a downloaded polluted copy.
    pub delete_probability: f64,
    /// Expected false positive rate of probabilistic verification.
    pub efpr: f64,
    /// Probability that a genuine vote has the wrong sign.
    pub vote_noise: f64,
    /// The verification planner's assumed minimum number of corrupted
    /// blocks in a polluted download. Copies assembled from several
    /// providers can carry as little as one corrupted block, so the
    /// presets assume 1.
    pub plan_polluted_min: u32,
    pub user_count: u32,
    /// Mean friend links in the synthetic social graph (must be even).
    pub synth_friend_degree: u32,
    pub genuine_group_count: u32,
    /// Zipf exponent of the genuine-group size allocation.
    pub group_zipf_alpha: f64,
    pub file_count: u32,
    pub versions_per_file: u32,
    pub blocks_per_version: u32,
    pub authentic_shares_per_genuine: u32,
    /// Zipf exponent of file and version popularity.
    pub zipf_content_alpha: f64,
    pub experimental_cycles: u32,
    pub query_cycles_per_experimental_cycle: u64,
    /// Friend-vote databases refresh once per this many query cycles.
    /// Cached pairwise correlation weights refresh on the same period.
    pub friend_db_refresh_period: u64,
    /// Voter sample size cap for one reputation computation.
    pub voter_sample_cap: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub scenario: AttackScenario,
    /// Social graph trace to load instead of synthesizing one.
    pub trace_path: Option<PathBuf>,
}

impl Default for SimConfig {
    /// Desk-scale decoy-insertion experiment.
    fn default() -> Self {
        SimConfig {
            maintainer_group_size: 5,
            beta: 0.2,
            gamma: 0.9,
            vote_probability: 0.9,
            delete_probability: 0.9,
            efpr: 0.133,
            vote_noise: 0.1,
            plan_polluted_min: 1,
            user_count: 2_000,
            synth_friend_degree: 8,
            genuine_group_count: 50,
            group_zipf_alpha: 1.0,
            file_count: 200,
            versions_per_file: 20,
            blocks_per_version: 10,
            authentic_shares_per_genuine: 20,
            zipf_content_alpha: 0.8,
            experimental_cycles: 20,
            query_cycles_per_experimental_cycle: 50_000,
            friend_db_refresh_period: 100_000,
            voter_sample_cap: 50,
            strategy: Strategy::Green,
            seed: 1,
            scenario: AttackScenario::decoy_insertion(),
            trace_path: None,
        }
    }
}

impl SimConfig {
    /// Desk-scale decoy-insertion preset (the default).
    pub fn desk_decoy() -> Self {
        SimConfig::default()
    }

    /// Desk-scale identifier-corruption preset.
    pub fn desk_identifier() -> Self {
        SimConfig {
            scenario: AttackScenario::identifier_corruption(),
            ..SimConfig::default()
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn total_query_cycles(&self) -> u64 {
        self.experimental_cycles as u64 * self.query_cycles_per_experimental_cycle
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        let prob = |name: &str, value: f64| {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                Err(ConfigError::Invalid(format!(
                    "{name} must lie in [0, 1], got {value}"
                )))
            } else {
                Ok(())
            }
        };
        prob("vote_probability", self.vote_probability)?;
        prob("delete_probability", self.delete_probability)?;
        prob("efpr", self.efpr)?;
        prob("vote_noise", self.vote_noise)?;
        prob(
            "scenario.maintainer_corruption_rate",
            self.scenario.maintainer_corruption_rate,
        )?;
        if !(0.0..1.0).contains(&self.beta) {
            return invalid(format!("beta must lie in [0, 1), got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return invalid(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.maintainer_group_size == 0 {
            return invalid("maintainer_group_size must be at least 1".into());
        }
        if self.user_count < 2 {
            return invalid("user_count must be at least 2".into());
        }
        if self.file_count == 0 || self.versions_per_file == 0 {
            return invalid("file_count and versions_per_file must be at least 1".into());
        }
        if self.blocks_per_version == 0 {
            return invalid("blocks_per_version must be at least 1".into());
        }
        if self.plan_polluted_min > self.blocks_per_version {
            return invalid(format!(
                "plan_polluted_min ({}) cannot exceed blocks_per_version ({})",
                self.plan_polluted_min, self.blocks_per_version
            ));
        }
        let catalog = self.file_count as u64 * self.versions_per_file as u64;
        if self.authentic_shares_per_genuine as u64 > catalog {
            return invalid(format!(
                "authentic_shares_per_genuine ({}) exceeds the catalog of {} versions",
                self.authentic_shares_per_genuine, catalog
            ));
        }
        if self.scenario.kind == AttackKind::IdentifierCorruption {
            let r = self.scenario.corrupted_blocks_per_copy;
            if r == 0 || r > self.blocks_per_version {
                return invalid(format!(
                    "corrupted_blocks_per_copy must lie in [1, {}], got {r}",
                    self.blocks_per_version
                ));
            }
            if self.scenario.polluted_versions_per_polluter as u64 > catalog {
                return invalid(format!(
                    "polluted_versions_per_polluter ({}) exceeds the catalog of {catalog} versions",
                    self.scenario.polluted_versions_per_polluter
                ));
            }
        }
        if self.trace_path.is_none() {
            let d = self.synth_friend_degree;
            if d < 2 || d % 2 != 0 {
                return invalid(format!(
                    "synth_friend_degree must be an even number >= 2, got {d}"
                ));
            }
            if d >= self.user_count {
                return invalid(format!(
                    "synth_friend_degree ({d}) must be below user_count ({})",
                    self.user_count
                ));
            }
        }
        if self.genuine_group_count == 0 {
            return invalid("genuine_group_count must be at least 1".into());
        }
        if self.friend_db_refresh_period == 0 {
            return invalid("friend_db_refresh_period must be at least 1".into());
        }
        if self.voter_sample_cap == 0 {
            return invalid("voter_sample_cap must be at least 1".into());
        }
        if self.experimental_cycles == 0 {
            return invalid("experimental_cycles must be at least 1".into());
        }
        Ok(())
    }
}

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// On-disk config document: a format version plus the simulation config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigFile {
    pub version: u32,
    pub sim: SimConfig,
}

impl ConfigFile {
    pub fn new(sim: SimConfig) -> Self {
        ConfigFile {
            version: CONFIG_FORMAT_VERSION,
            sim,
        }
    }

    pub fn load(path: &std::path::Path) -> Result<SimConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ConfigFile = toml::from_str(&text)?;
        if file.version != CONFIG_FORMAT_VERSION {
            return Err(ConfigError::UnsupportedVersion(file.version));
        }
        Ok(file.sim)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
