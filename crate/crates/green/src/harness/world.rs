//! World state of one simulation run: users, files, versions, the
//! canonical index tables, and the pollution seeding.
//!
//! All maintainers are honest during experiment runs (the corruption rate
//! is zero in the presets, matching the evaluation setup), and honest
//! maintainers receive identical writes. The world therefore keeps one
//! canonical index record per version instead of `m` replicas; the
//! replicated stores and the majority filter are exercised directly by
//! the protocol-level tests and the filtering scenarios. Queries under a
//! non-zero corruption rate materialize per-maintainer responses and run
//! the real filter (see `cycle.rs`).

use crate::adversary::{AttackKind, ResponseCorrupter};
use crate::content::{make_version, FileId, FileInfoRecord, VersionId, VersionInstance};
use crate::harness::config::{ConfigError, SimConfig};
use crate::harness::fenwick::Fenwick;
use crate::harness::rng::derive_stream;
use crate::harness::zipf::ZipfSampler;
use crate::overlay::{maintainer_group, NodeId, Population};
use crate::reputation::{extend_history, FriendVoteDb, VoteHistory};
use crate::socialgraph::{self, Label, SocialGraph};
use crate::verification::{plan_verification, VerificationPlan};
use rand::seq::index;
use rand_chacha::ChaCha12Rng;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

pub(crate) type UserIx = u32;
pub(crate) type FileIx = u32;
pub(crate) type VersionIx = u32;

/// Files are named by their catalog index.
pub(crate) fn file_name(f: FileIx) -> String {
    format!("file-{f:04}")
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("social graph: {0}")]
    Graph(#[from] socialgraph::GraphError),
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone)]
pub(crate) struct HeldCopy {
    /// Corrupted block positions of this copy; empty means clean.
    pub corrupted: Box<[u16]>,
}

#[derive(Debug)]
pub(crate) struct UserState {
    pub id: NodeId,
    pub label: Label,
    /// Friend indices, ascending (user indices are id-ordered).
    pub friends: Vec<UserIx>,
    pub local_history: VoteHistory,
    /// Local history extended with friend snapshots; maintained
    /// incrementally between database refreshes. Only meaningful under
    /// social strategies.
    pub extended_history: VoteHistory,
    pub friend_db: FriendVoteDb,
    pub holdings: HashMap<VersionIx, HeldCopy>,
}

#[derive(Debug)]
pub(crate) struct FileState {
    pub id: FileId,
    pub maintainers: Vec<NodeId>,
    /// Versions of this file in slot order; slots index the fenwick.
    pub version_slots: Vec<VersionIx>,
    /// Provider count per slot, for provider-proportional sampling.
    pub fenwick: Fenwick,
}

#[derive(Debug)]
pub(crate) struct VersionState {
    pub file: FileIx,
    pub slot: u32,
    /// Fresh junk content under its own identifier, as opposed to an
    /// authentic catalog version (which may still have corrupted copies).
    pub decoy: bool,
    pub instance: VersionInstance,
    /// Canonical index row shared by the file's honest maintainers.
    pub record: FileInfoRecord,
    /// The voter list as dense user indices, in registration order,
    /// mirroring `record.voter_ids` for the reputation hot path.
    pub voter_ixs: Vec<UserIx>,
    /// Bumped on every vote; reputation cache entries key off it.
    pub vote_seq: u64,
}

/// Per-experimental-cycle counters.
#[derive(Debug, Clone, Copy, Default)]
pub struct CycleCounters {
    pub authentic_downloads: u64,
    pub total_downloads: u64,
    pub failed_queries: u64,
    pub polluted_accepted: u64,
    pub polluted_attempts: u64,
}

/// Whole-run instrumentation counters.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct OpCounters {
    pub reputation_scores: u64,
    pub quick_estimate_hits: u64,
    pub correlation_computations: u64,
    pub filtered_queries: u64,
    pub exact_selection_fallbacks: u64,
}

pub(crate) struct Streams {
    pub requestor: ChaCha12Rng,
    pub file_pick: ChaCha12Rng,
    pub selection: ChaCha12Rng,
    pub verify: ChaCha12Rng,
    pub votes: ChaCha12Rng,
    pub voters: ChaCha12Rng,
    pub corruption: ChaCha12Rng,
}

/// Cached pairwise correlation weight. The weight is recomputed once
/// either side's history has grown materially (a quarter) past the size
/// it had when the weight was measured; with little shared evidence it
/// refreshes on nearly every new vote, and mature weights, which drift
/// slowly, refresh rarely. This generalizes the periodic recomputation
/// the protocol already prescribes for friend weights.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ThetaEntry {
    pub theta: f64,
    pub r_len: u32,
    pub o_len: u32,
}

impl ThetaEntry {
    pub fn fresh_for(&self, r_len: usize, o_len: usize) -> bool {
        fn within(now: usize, then: u32) -> bool {
            let then = then as usize;
            now <= then + (then / 4).max(1)
        }
        within(r_len, self.r_len) && within(o_len, self.o_len)
    }
}

/// Cached reputation score, recomputed when new votes on the version
/// amount to a meaningful fraction of the voter list sampled for it.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RepEntry {
    pub score: f64,
    pub vote_seq: u64,
    pub oil_len: u32,
}

impl RepEntry {
    pub fn fresh_for(&self, vote_seq: u64) -> bool {
        vote_seq <= self.vote_seq + (self.oil_len as u64 / 32)
    }
}

/// One simulation world. Strictly single-threaded; a run is a pure
/// function of its configuration (including the seed).
pub struct World {
    pub cfg: SimConfig,
    pub population: Population,
    pub(crate) users: Vec<UserState>,
    pub(crate) user_index: HashMap<NodeId, UserIx>,
    pub(crate) files: Vec<FileState>,
    pub(crate) versions: Vec<VersionState>,
    pub(crate) version_index: HashMap<VersionId, VersionIx>,
    pub(crate) file_zipf: ZipfSampler,
    pub(crate) verify_plan: VerificationPlan,
    pub(crate) no_verify_plan: VerificationPlan,
    pub(crate) streams: Streams,
    pub(crate) corrupter: ResponseCorrupter,
    pub query_cycle: u64,
    pub(crate) counters: CycleCounters,
    pub op_counters: OpCounters,
    pub(crate) theta_cache: HashMap<(UserIx, UserIx), ThetaEntry>,
    pub(crate) rep_cache: HashMap<(UserIx, VersionIx), RepEntry>,
    graph_stats: socialgraph::GraphStats,
}

impl World {
    pub fn graph_stats(&self) -> &socialgraph::GraphStats {
        &self.graph_stats
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn genuine_count(&self) -> usize {
        self.users.iter().filter(|u| u.label.is_genuine()).count()
    }

    pub fn version_count(&self) -> usize {
        self.versions.len()
    }

    pub fn decoy_count(&self) -> usize {
        self.versions.iter().filter(|v| v.decoy).count()
    }

    /// Total provider-list entries across all versions.
    pub fn provider_entries(&self) -> usize {
        self.versions
            .iter()
            .map(|v| v.record.provider_ids.len())
            .sum()
    }

    /// Copies sitting in shared folders that carry corrupted blocks.
    pub fn corrupted_holdings(&self) -> usize {
        self.users
            .iter()
            .flat_map(|u| u.holdings.values())
            .filter(|copy| !copy.corrupted.is_empty())
            .count()
    }

    /// Share count per catalog slot `(file, version)`, for popularity
    /// checks on the seeded world.
    pub fn seeded_share_counts(&self) -> Vec<usize> {
        self.versions
            .iter()
            .filter(|v| !v.decoy)
            .map(|v| v.record.provider_ids.len())
            .collect()
    }

    pub(crate) fn social_enabled(&self) -> bool {
        self.cfg.strategy.uses_social()
    }

    pub(crate) fn drain_cycle_counters(&mut self) -> CycleCounters {
        std::mem::take(&mut self.counters)
    }
}

/// Builds and seeds a world: graph, labels, catalog, genuine shares,
/// pollution, and publication of everything to the maintainer groups.
pub fn init_world(cfg: SimConfig) -> Result<World, WorldError> {
    cfg.validate()?;

    // Social graph and labels.
    let mut graph_rng = derive_stream(cfg.seed, "social-graph");
    let mut graph: SocialGraph = match &cfg.trace_path {
        Some(path) => socialgraph::load_trace(path)?,
        None => socialgraph::synth_graph(cfg.user_count, cfg.synth_friend_degree, &mut graph_rng)?,
    };
    let mut label_rng = derive_stream(cfg.seed, "labels");
    socialgraph::label_population(
        &mut graph,
        cfg.genuine_group_count,
        1.0 - cfg.beta,
        cfg.group_zipf_alpha,
        socialgraph::DEFAULT_RESEED_CAP,
        &mut label_rng,
    )?;
    let graph_stats = graph.stats();

    // Users, id-ordered so indices are deterministic.
    let ids: Vec<NodeId> = graph.users().collect();
    let population = Population::new(ids.iter().copied());
    let user_index: HashMap<NodeId, UserIx> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i as UserIx))
        .collect();
    let mut users: Vec<UserState> = ids
        .iter()
        .map(|&id| UserState {
            id,
            label: graph.label(&id).expect("labeled"),
            friends: graph
                .friends(&id)
                .map(|f| user_index[&f])
                .collect::<Vec<UserIx>>(),
            local_history: VoteHistory::new(),
            extended_history: VoteHistory::new(),
            friend_db: FriendVoteDb::default(),
            holdings: HashMap::new(),
        })
        .collect();
    for user in &mut users {
        user.friends.sort_unstable();
    }

    // Catalog: files and their authentic versions.
    let mut files: Vec<FileState> = Vec::with_capacity(cfg.file_count as usize);
    let mut versions: Vec<VersionState> = Vec::new();
    let mut version_index: HashMap<VersionId, VersionIx> = HashMap::new();
    let mut content_seed = 0u64;
    for f in 0..cfg.file_count {
        let name = file_name(f);
        let id = FileId::of_name(&name);
        let maintainers =
            maintainer_group(&name, cfg.maintainer_group_size, &population)
                .expect("non-empty population")
                .members;
        let mut version_slots = Vec::with_capacity(cfg.versions_per_file as usize);
        for _ in 0..cfg.versions_per_file {
            let (instance, digest_list, vid) =
                make_version(id, cfg.blocks_per_version, content_seed)
                    .expect("blocks_per_version >= 1");
            content_seed += 1;
            let ix = versions.len() as VersionIx;
            version_index.insert(vid, ix);
            versions.push(VersionState {
                file: f,
                slot: version_slots.len() as u32,
                decoy: false,
                instance,
                record: FileInfoRecord::new(vid, Some(digest_list)),
                voter_ixs: Vec::new(),
                vote_seq: 0,
            });
            version_slots.push(ix);
        }
        files.push(FileState {
            id,
            maintainers,
            version_slots,
            fenwick: Fenwick::from_counts(&[]),
        });
    }

    let file_zipf = ZipfSampler::new(cfg.file_count as usize, cfg.zipf_content_alpha);
    let version_zipf = ZipfSampler::new(cfg.versions_per_file as usize, cfg.zipf_content_alpha);

    // Genuine users seed their authentic shares: file then version by the
    // popularity law, distinct per user.
    let mut share_rng = derive_stream(cfg.seed, "seed-shares");
    let share_attempt_cap = 100 * cfg.authentic_shares_per_genuine.max(1);
    for u in 0..users.len() {
        if !users[u].label.is_genuine() {
            continue;
        }
        for _ in 0..cfg.authentic_shares_per_genuine {
            let mut attempts = 0;
            let v = loop {
                let f = file_zipf.sample(&mut share_rng);
                let slot = version_zipf.sample(&mut share_rng);
                let v = files[f].version_slots[slot];
                if !users[u].holdings.contains_key(&v) {
                    break v;
                }
                attempts += 1;
                if attempts > share_attempt_cap {
                    return Err(WorldError::Infeasible(format!(
                        "cannot place {} distinct shares per user in a catalog of {}",
                        cfg.authentic_shares_per_genuine,
                        versions.len()
                    )));
                }
            };
            users[u].holdings.insert(
                v,
                HeldCopy {
                    corrupted: Box::new([]),
                },
            );
            let id = users[u].id;
            versions[v as usize].record.add_provider(id);
        }
    }

    // Pollution, per scenario.
    let mut pollution_rng = derive_stream(cfg.seed, "seed-pollution");
    seed_pollution(
        &cfg,
        &mut users,
        &mut files,
        &mut versions,
        &mut version_index,
        &file_zipf,
        &version_zipf,
        &mut content_seed,
        &mut pollution_rng,
    )?;

    // Provider-count samplers, built once the catalog is complete. The
    // set of versions is fixed for the rest of the run.
    for file in files.iter_mut() {
        let counts: Vec<i64> = file
            .version_slots
            .iter()
            .map(|&v| versions[v as usize].record.provider_ids.len() as i64)
            .collect();
        file.fenwick = Fenwick::from_counts(&counts);
    }

    let verify_plan = plan_verification(cfg.blocks_per_version, cfg.plan_polluted_min, cfg.efpr)
        .map_err(|e| WorldError::Infeasible(e.to_string()))?;
    let no_verify_plan = plan_verification(cfg.blocks_per_version, cfg.plan_polluted_min, 1.0)
        .map_err(|e| WorldError::Infeasible(e.to_string()))?;

    let streams = Streams {
        requestor: derive_stream(cfg.seed, "query-requestor"),
        file_pick: derive_stream(cfg.seed, "query-file"),
        selection: derive_stream(cfg.seed, "query-selection"),
        verify: derive_stream(cfg.seed, "query-verify"),
        votes: derive_stream(cfg.seed, "query-votes"),
        voters: derive_stream(cfg.seed, "query-voters"),
        corruption: derive_stream(cfg.seed, "query-corruption"),
    };
    let mut corrupter_rng = derive_stream(cfg.seed, "corrupter");
    let corrupter = ResponseCorrupter::new(
        cfg.scenario.maintainer_corruption_rate,
        cfg.scenario.colluding_maintainers,
        &mut corrupter_rng,
    );

    Ok(World {
        cfg,
        population,
        users,
        user_index,
        files,
        versions,
        version_index,
        file_zipf,
        verify_plan,
        no_verify_plan,
        streams,
        corrupter,
        query_cycle: 0,
        counters: CycleCounters::default(),
        op_counters: OpCounters::default(),
        theta_cache: HashMap::new(),
        rep_cache: HashMap::new(),
        graph_stats,
    })
}

/// Seeds the configured attack: fresh decoy versions, or corrupted copies
/// of existing catalog versions under their unchanged identifiers.
#[allow(clippy::too_many_arguments)]
fn seed_pollution(
    cfg: &SimConfig,
    users: &mut [UserState],
    files: &mut [FileState],
    versions: &mut Vec<VersionState>,
    version_index: &mut HashMap<VersionId, VersionIx>,
    file_zipf: &ZipfSampler,
    version_zipf: &ZipfSampler,
    content_seed: &mut u64,
    rng: &mut ChaCha12Rng,
) -> Result<(), WorldError> {
    let shares = cfg.scenario.polluted_versions_per_polluter;
    for u in 0..users.len() {
        if users[u].label.is_genuine() {
            continue;
        }
        let polluter = users[u].id;
        match cfg.scenario.kind {
            AttackKind::DecoyInsertion => {
                for _ in 0..shares {
                    let f = file_zipf.sample(rng);
                    let (instance, digest_list, vid) =
                        make_version(files[f].id, cfg.blocks_per_version, *content_seed)
                            .expect("blocks_per_version >= 1");
                    *content_seed += 1;
                    let instance = instance.into_decoy();
                    let ix = versions.len() as VersionIx;
                    version_index.insert(vid, ix);
                    let mut record = FileInfoRecord::new(vid, Some(digest_list));
                    record.add_provider(polluter);
                    versions.push(VersionState {
                        file: f as FileIx,
                        slot: files[f].version_slots.len() as u32,
                        decoy: true,
                        instance,
                        record,
                        voter_ixs: Vec::new(),
                vote_seq: 0,
                    });
                    files[f].version_slots.push(ix);
                    users[u].holdings.insert(
                        ix,
                        HeldCopy {
                            corrupted: Box::new([]),
                        },
                    );
                }
            }
            AttackKind::IdentifierCorruption => {
                let attempt_cap = 100 * shares.max(1);
                for _ in 0..shares {
                    let mut attempts = 0;
                    let v = loop {
                        let f = file_zipf.sample(rng);
                        let slot = version_zipf.sample(rng);
                        let v = files[f].version_slots[slot];
                        if !users[u].holdings.contains_key(&v) {
                            break v;
                        }
                        attempts += 1;
                        if attempts > attempt_cap {
                            return Err(WorldError::Infeasible(format!(
                                "cannot place {shares} distinct corrupted copies per polluter"
                            )));
                        }
                    };
                    let b = cfg.blocks_per_version;
                    let corrupted: BTreeSet<u16> = index::sample(
                        rng,
                        b as usize,
                        cfg.scenario.corrupted_blocks_per_copy as usize,
                    )
                    .into_iter()
                    .map(|i| i as u16)
                    .collect();
                    let state = &mut versions[v as usize];
                    state.instance.corrupt_copy(polluter, corrupted.clone());
                    state.record.add_provider(polluter);
                    users[u].holdings.insert(
                        v,
                        HeldCopy {
                            corrupted: corrupted.into_iter().collect(),
                        },
                    );
                }
            }
        }
    }
    Ok(())
}

impl World {
    /// Rebuilds one user's extended-history entry for `version` from the
    /// local vote and the friend-db snapshots, in the same accumulation
    /// order as a full `extend_history` rebuild.
    pub(crate) fn refresh_extended_entry(&mut self, u: UserIx, version: VersionId) {
        let gamma = self.cfg.gamma;
        let user = &mut self.users[u as usize];
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        let local = user.local_history.value(&version);
        if local != 0.0 {
            num += local;
            den += 1.0;
        }
        for snapshot in user.friend_db.snapshots.values() {
            let vote = snapshot.history.value(&version);
            if vote != 0.0 {
                num += vote * gamma;
                den += gamma;
            }
        }
        if den == 0.0 {
            user.extended_history.remove(&version);
        } else {
            user.extended_history
                .set_value(version, (num / den).clamp(-1.0, 1.0));
        }
    }

    /// Refreshes every genuine user's friend-vote database from the
    /// friends' current histories (honest replicas carry exactly the
    /// voters' local histories), then rebuilds the extended history.
    pub(crate) fn refresh_friend_dbs(&mut self) {
        let gamma = self.cfg.gamma;
        let cycle = self.query_cycle;
        for u in 0..self.users.len() {
            if !self.users[u].label.is_genuine() {
                continue;
            }
            let friend_histories: Vec<(NodeId, VoteHistory)> = self.users[u]
                .friends
                .iter()
                .map(|&f| {
                    (
                        self.users[f as usize].id,
                        self.users[f as usize].local_history.clone(),
                    )
                })
                .collect();
            let db = crate::reputation::refresh_friend_db(
                &self.users[u].local_history,
                &friend_histories,
                gamma,
                cycle,
            );
            let snapshot_refs: Vec<&VoteHistory> =
                db.snapshots.values().map(|s| &s.history).collect();
            let extended = extend_history(&self.users[u].local_history, &snapshot_refs, gamma);
            let user = &mut self.users[u];
            user.friend_db = db;
            user.extended_history = extended;
        }
    }
}
