//! Attacker behaviors: decoy insertion, identifier corruption, malicious
//! voting, and response corruption by malicious or compromised
//! maintainers.
//!
//! Pollution seeding itself lives in the harness (it mutates world state);
//! this module holds the scenario parameters and the stateless attacker
//! transformations.

use crate::content::{make_version, DigestList, FileId, FileInfoRecord, VersionId};
use crate::overlay::{hash_to_id, NodeId};
use crate::reputation::Vote;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// The two pollution attack forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Inject fresh corrupted versions with their own identifiers.
    DecoyInsertion,
    /// Share corrupted copies of existing versions under the unchanged
    /// version identifier.
    IdentifierCorruption,
}

/// How polluters vote on the versions they download.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum VotingStrategy {
    /// Always the opposite of the true authenticity.
    Opposite,
    /// Correct with probability `correct_prob`, opposite otherwise, to
    /// look partially credible.
    Tricky { correct_prob: f64 },
}

/// Scenario parameters for one attack campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub kind: AttackKind,
    /// How many polluted versions each polluter shares at world start.
    pub polluted_versions_per_polluter: u32,
    pub voting_strategy: VotingStrategy,
    /// Probability that a malicious maintainer corrupts each response it
    /// serves. Zero in the experiment presets; the filtering scenarios
    /// turn it on.
    pub maintainer_corruption_rate: f64,
    /// Colluding maintainers inject one agreed-upon fabricated record (the
    /// worst case for the tally) instead of independent ones.
    pub colluding_maintainers: bool,
    /// Blocks corrupted per shared copy under identifier corruption.
    pub corrupted_blocks_per_copy: u32,
}

impl AttackScenario {
    pub fn decoy_insertion() -> Self {
        AttackScenario {
            kind: AttackKind::DecoyInsertion,
            polluted_versions_per_polluter: 400,
            voting_strategy: VotingStrategy::Opposite,
            maintainer_corruption_rate: 0.0,
            colluding_maintainers: true,
            corrupted_blocks_per_copy: 2,
        }
    }

    pub fn identifier_corruption() -> Self {
        AttackScenario {
            kind: AttackKind::IdentifierCorruption,
            polluted_versions_per_polluter: 50,
            voting_strategy: VotingStrategy::Opposite,
            maintainer_corruption_rate: 0.0,
            colluding_maintainers: true,
            corrupted_blocks_per_copy: 2,
        }
    }
}

/// Default tricky-voting probability when none is configured. The value is
/// a parameter of ours, not a given.
pub const DEFAULT_TRICKY_CORRECT_PROB: f64 = 0.5;

/// A polluter's vote on a version whose true authenticity is
/// `version_authentic`.
pub fn malicious_vote(
    version_authentic: bool,
    strategy: VotingStrategy,
    rng: &mut impl Rng,
) -> Vote {
    let correct = if version_authentic {
        Vote::Positive
    } else {
        Vote::Negative
    };
    match strategy {
        VotingStrategy::Opposite => correct.flipped(),
        VotingStrategy::Tricky { correct_prob } => {
            if rng.random_bool(correct_prob.clamp(0.0, 1.0)) {
                correct
            } else {
                correct.flipped()
            }
        }
    }
}

/// The ways a malicious maintainer can corrupt a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionMode {
    /// Refuse: drop every record.
    Refuse,
    /// Inject a fabricated record (consistent version id and digest list,
    /// fake provider and voter), keeping the honest ones.
    InjectPair,
    /// Rewrite the version identifier of one record, leaving the digest
    /// list alone; the requestor's hash check catches this.
    RewriteVersionId,
    /// Rewrite a record's version identifier and digest list together so
    /// the pair stays consistent; only the majority tally catches this.
    RewriteVersionIdAndDigest,
}

impl CorruptionMode {
    pub const ALL: [CorruptionMode; 4] = [
        CorruptionMode::Refuse,
        CorruptionMode::InjectPair,
        CorruptionMode::RewriteVersionId,
        CorruptionMode::RewriteVersionIdAndDigest,
    ];
}

/// Fabricates a record with a consistent (version id, digest list) pair
/// and fresh provider/voter identifiers.
pub fn fabricate_record(rng: &mut impl Rng) -> FileInfoRecord {
    let tag: u64 = rng.random();
    let file = FileId::of_name(&format!("fabricated-{tag}"));
    let (_, dl, vid) = make_version(file, 4, tag).expect("nonzero blocks");
    let mut record = FileInfoRecord::new(vid, Some(dl));
    record.add_provider(fresh_id(rng));
    record.add_voter(fresh_id(rng));
    record
}

fn fresh_id(rng: &mut impl Rng) -> NodeId {
    let tag: u128 = rng.random();
    hash_to_id(&tag.to_le_bytes()).expect("nonempty")
}

fn fresh_version(rng: &mut impl Rng) -> (VersionId, DigestList) {
    let tag: u64 = rng.random();
    let file = FileId::of_name(&format!("rewritten-{tag}"));
    let (_, dl, vid) = make_version(file, 4, tag).expect("nonzero blocks");
    (vid, dl)
}

/// Applies one corruption mode to a maintainer's honest records.
pub fn corrupt_records(
    honest: &[FileInfoRecord],
    mode: CorruptionMode,
    fabricated: &FileInfoRecord,
    rng: &mut impl Rng,
) -> Vec<FileInfoRecord> {
    match mode {
        CorruptionMode::Refuse => Vec::new(),
        CorruptionMode::InjectPair => {
            let mut records = honest.to_vec();
            records.push(fabricated.clone());
            records
        }
        CorruptionMode::RewriteVersionId => {
            let mut records = honest.to_vec();
            if !records.is_empty() {
                let i = rng.random_range(0..records.len());
                let (vid, _) = fresh_version(rng);
                records[i].version_id = vid;
            }
            records
        }
        CorruptionMode::RewriteVersionIdAndDigest => {
            let mut records = honest.to_vec();
            if !records.is_empty() {
                let i = rng.random_range(0..records.len());
                let (vid, dl) = fresh_version(rng);
                records[i].version_id = vid;
                records[i].digest_list = Some(dl);
            }
            records
        }
    }
}

/// Per-query response corrupter for a set of malicious maintainers. In
/// colluding mode every corrupting maintainer injects the same fabricated
/// record; otherwise each fabrication is fresh.
#[derive(Debug)]
pub struct ResponseCorrupter {
    pub rate: f64,
    pub colluding: bool,
    shared_fabrication: FileInfoRecord,
}

impl ResponseCorrupter {
    pub fn new(rate: f64, colluding: bool, rng: &mut impl Rng) -> Self {
        ResponseCorrupter {
            rate,
            colluding,
            shared_fabrication: fabricate_record(rng),
        }
    }

    /// The fabricated record colluders agree on.
    pub fn shared_fabrication(&self) -> &FileInfoRecord {
        &self.shared_fabrication
    }

    /// Corrupts one malicious maintainer's response with probability
    /// `rate`, picking a corruption mode uniformly.
    pub fn corrupt(&self, honest: &[FileInfoRecord], rng: &mut impl Rng) -> Vec<FileInfoRecord> {
        if self.rate <= 0.0 || !rng.random_bool(self.rate.clamp(0.0, 1.0)) {
            return honest.to_vec();
        }
        let mode = *CorruptionMode::ALL.choose(rng).expect("non-empty");
        let fabrication;
        let fabricated = if self.colluding {
            &self.shared_fabrication
        } else {
            fabrication = fabricate_record(rng);
            &fabrication
        };
        corrupt_records(honest, mode, fabricated, rng)
    }

    /// Worst-case collusion for the soundness analysis: drop the honest
    /// records and serve only the agreed fabricated one.
    pub fn corrupt_worst_case(&self) -> Vec<FileInfoRecord> {
        vec![self.shared_fabrication.clone()]
    }
}
