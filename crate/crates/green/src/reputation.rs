//! Vote histories and their redundant storage, correlation weights,
//! weighted reputation scores, the social vote-history extension, and the
//! friend-vote quick estimate.

use crate::content::VersionId;
use crate::filtering::majority_threshold;
use crate::overlay::{maintainer_group, NodeId, OverlayError, Population};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use thiserror::Error;

/// A vote on a version: positive for authentic, negative for polluted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vote {
    Positive,
    Negative,
}

impl Vote {
    pub fn value(self) -> f64 {
        match self {
            Vote::Positive => 1.0,
            Vote::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Vote {
        match self {
            Vote::Positive => Vote::Negative,
            Vote::Negative => Vote::Positive,
        }
    }

    pub fn from_sign(value: f64) -> Option<Vote> {
        if value > 0.0 {
            Some(Vote::Positive)
        } else if value < 0.0 {
            Some(Vote::Negative)
        } else {
            None
        }
    }
}

/// Key of a vote-history entry. Protocol-level histories key on the full
/// version identifier; the harness instantiates dense `u32` indices for
/// its hot path, with identical semantics.
pub trait VoteKey: Ord + Copy + std::fmt::Debug {}
impl<K: Ord + Copy + std::fmt::Debug> VoteKey for K {}

/// Sparse vote history: absent versions count as "not voted" (zero in the
/// vector rendering). Local histories hold exactly +/-1; extended
/// histories hold reals in [-1, 1]. Exact zeros are never stored.
///
/// Entries live in a flat vector sorted by key: correlation walks
/// intersect two histories linearly over contiguous memory, which is the
/// hottest loop of the whole simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct History<K: VoteKey> {
    entries: Vec<(K, f64)>,
}

/// Vote history keyed by full version identifiers.
pub type VoteHistory = History<VersionId>;

impl<K: VoteKey> Default for History<K> {
    fn default() -> Self {
        History {
            entries: Vec::new(),
        }
    }
}

impl<K: VoteKey> History<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn position(&self, version: &K) -> Result<usize, usize> {
        self.entries.binary_search_by(|(v, _)| v.cmp(version))
    }

    /// Value voted on `version`, zero when absent.
    pub fn value(&self, version: &K) -> f64 {
        match self.position(version) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn set_vote(&mut self, version: K, vote: Vote) {
        self.set_value(version, vote.value());
    }

    /// Stores a real-valued entry; zero removes the entry.
    pub fn set_value(&mut self, version: K, value: f64) {
        debug_assert!((-1.0..=1.0).contains(&value));
        match self.position(&version) {
            Ok(i) => {
                if value == 0.0 {
                    self.entries.remove(i);
                } else {
                    self.entries[i].1 = value;
                }
            }
            Err(i) => {
                if value != 0.0 {
                    self.entries.insert(i, (version, value));
                }
            }
        }
    }

    pub fn remove(&mut self, version: &K) {
        if let Ok(i) = self.position(version) {
            self.entries.remove(i);
        }
    }

    /// Entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&K, f64)> {
        self.entries.iter().map(|(v, x)| (v, *x))
    }

    fn entries(&self) -> &[(K, f64)] {
        &self.entries
    }

    /// Entries as `(version, sign)` pairs, for replica tallies.
    pub fn signed_entries(&self) -> impl Iterator<Item = (K, i8)> + '_ {
        self.entries
            .iter()
            .map(|(v, x)| (*v, if *x > 0.0 { 1 } else { -1 }))
    }
}

/// Compact serialized form: a format version and the sorted entry list.
#[derive(Serialize, Deserialize)]
struct VoteHistoryWire {
    version: u32,
    entries: Vec<(String, f64)>,
}

const VOTE_HISTORY_WIRE_VERSION: u32 = 1;

impl Serialize for VoteHistory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let wire = VoteHistoryWire {
            version: VOTE_HISTORY_WIRE_VERSION,
            entries: self
                .entries
                .iter()
                .map(|(v, x)| (v.to_hex(), *x))
                .collect(),
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VoteHistory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = VoteHistoryWire::deserialize(deserializer)?;
        if wire.version != VOTE_HISTORY_WIRE_VERSION {
            return Err(D::Error::custom(format!(
                "unsupported vote history format version {}",
                wire.version
            )));
        }
        let mut history = VoteHistory::new();
        for (hex, value) in wire.entries {
            let version = VersionId::from_hex(&hex)
                .ok_or_else(|| D::Error::custom(format!("bad version id {hex:?}")))?;
            if value == 0.0 || !(-1.0..=1.0).contains(&value) {
                return Err(D::Error::custom(format!("bad vote value {value}")));
            }
            history.set_value(version, value);
        }
        Ok(history)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReputationError {
    #[error(transparent)]
    Overlay(#[from] OverlayError),
}

/// Agreement statistics over the set of versions both users voted on:
/// `a` and `b` are each side's positive fractions, `p` the fraction where
/// both voted positively. Extended-history entries count as positive when
/// greater than zero and negative when less.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationStats {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub shared_count: usize,
}

pub fn correlation_stats<K: VoteKey>(r: &History<K>, o: &History<K>) -> CorrelationStats {
    let mut shared = 0usize;
    let mut r_pos = 0usize;
    let mut o_pos = 0usize;
    let mut both_pos = 0usize;

    // Two-pointer intersection of the sorted entry lists.
    let ra = r.entries();
    let ob = o.entries();
    let mut i = 0usize;
    let mut j = 0usize;
    while i < ra.len() && j < ob.len() {
        match ra[i].0.cmp(&ob[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let rv = ra[i].1;
                let ov = ob[j].1;
                shared += 1;
                if rv > 0.0 {
                    r_pos += 1;
                }
                if ov > 0.0 {
                    o_pos += 1;
                }
                if rv > 0.0 && ov > 0.0 {
                    both_pos += 1;
                }
                i += 1;
                j += 1;
            }
        }
    }

    if shared == 0 {
        return CorrelationStats {
            a: 0.0,
            b: 0.0,
            p: 0.0,
            shared_count: 0,
        };
    }
    let n = shared as f64;
    CorrelationStats {
        a: r_pos as f64 / n,
        b: o_pos as f64 / n,
        p: both_pos as f64 / n,
        shared_count: shared,
    }
}

/// Correlation weights with magnitude below this cutoff are treated as
/// uncorrelated and zeroed.
pub const CORRELATION_CUTOFF: f64 = 0.5;

/// Raw phi coefficient `(p - ab) / sqrt(a(1-a)b(1-b))` of the two vote
/// histories. Degenerate cases (no shared votes, or a positive fraction of
/// exactly 0 or 1) yield zero, the conservative "uncorrelated" reading.
pub fn raw_correlation(stats: &CorrelationStats) -> f64 {
    if stats.shared_count == 0 {
        return 0.0;
    }
    let va = stats.a * (1.0 - stats.a);
    let vb = stats.b * (1.0 - stats.b);
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    (stats.p - stats.a * stats.b) / (va * vb).sqrt()
}

/// Thresholded correlation weight between two vote histories: the raw
/// coefficient when its magnitude reaches the cutoff, zero otherwise,
/// clamped to [-1, 1].
pub fn correlation<K: VoteKey>(r: &History<K>, o: &History<K>) -> f64 {
    let raw = raw_correlation(&correlation_stats(r, o));
    if raw.abs() >= CORRELATION_CUTOFF {
        raw.clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Weighted average of votes by correlation weight:
/// `sum(vote * theta) / sum(|theta|)`, zero when all weights vanish.
pub fn weighted_score(votes_and_weights: &[(f64, f64)]) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for &(vote, theta) in votes_and_weights {
        num += vote * theta;
        den += theta.abs();
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).clamp(-1.0, 1.0)
    }
}

/// Extends a local vote history with attenuated friend histories.
///
/// Per version, this is the weighted average of the votes actually cast,
/// the local vote at weight 1 and each friend's at weight `gamma`. Unvoted
/// versions stay absent, and balanced disagreement that averages to exact
/// zero is treated as "no opinion" and dropped. With no friends the local
/// history is returned unchanged.
pub fn extend_history<K: VoteKey>(
    local: &History<K>,
    friends: &[&History<K>],
    gamma: f64,
) -> History<K> {
    debug_assert!(gamma > 0.0 && gamma <= 1.0);
    if friends.is_empty() {
        return local.clone();
    }
    // Accumulation order is fixed (local, then friends in order) so that
    // unanimous agreement yields exactly +/-1.
    let mut acc: BTreeMap<K, (f64, f64)> = BTreeMap::new();
    for (version, value) in local.iter() {
        let entry = acc.entry(*version).or_insert((0.0, 0.0));
        entry.0 += value;
        entry.1 += 1.0;
    }
    for friend in friends {
        for (version, value) in friend.iter() {
            let entry = acc.entry(*version).or_insert((0.0, 0.0));
            entry.0 += value * gamma;
            entry.1 += gamma;
        }
    }
    let mut extended = History::new();
    for (version, (num, den)) in acc {
        let value = (num / den).clamp(-1.0, 1.0);
        if value != 0.0 {
            extended.set_value(version, value);
        }
    }
    extended
}

/// Friends with fewer than this many votes on a version cannot carry a
/// quick estimate.
pub const QUICK_ESTIMATE_MIN_VOTES: usize = 4;
/// Minimum magnitude for a quick estimate to stand as the final score.
pub const QUICK_ESTIMATE_CUTOFF: f64 = 0.5;
/// Friends whose cached correlation weight is below this are not counted
/// in quick estimation.
pub const QUICK_ESTIMATE_MIN_THETA: f64 = 0.5;

/// Outcome of the friend-vote shortcut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuickEstimate {
    /// Enough like-minded friends voted, and decisively.
    Score(f64),
    /// Fall back to the full reputation computation.
    FallBack,
}

/// One friend's cached state in the friend-vote database.
#[derive(Debug, Clone, PartialEq)]
pub struct FriendSnapshot<K: VoteKey = VersionId> {
    pub history: History<K>,
    pub theta: f64,
}

/// Per-user cache of friends' vote histories, refreshed periodically; the
/// correlation weights are recomputed only at refresh time.
#[derive(Debug, Clone, PartialEq)]
pub struct FriendVoteDb<K: VoteKey = VersionId> {
    pub snapshots: BTreeMap<NodeId, FriendSnapshot<K>>,
    pub last_refresh: u64,
}

impl<K: VoteKey> Default for FriendVoteDb<K> {
    fn default() -> Self {
        FriendVoteDb {
            snapshots: BTreeMap::new(),
            last_refresh: 0,
        }
    }
}

/// Estimates a version's reputation from friend votes alone:
/// `gamma * mean(votes)` over friends with cached weight >= 0.5 who voted
/// the version. Requires at least `QUICK_ESTIMATE_MIN_VOTES` such friends
/// and a result of magnitude >= 0.5; otherwise the caller falls back to
/// the full computation.
pub fn quick_estimate<K: VoteKey>(db: &FriendVoteDb<K>, version: &K, gamma: f64) -> QuickEstimate {
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for snapshot in db.snapshots.values() {
        if snapshot.theta < QUICK_ESTIMATE_MIN_THETA {
            continue;
        }
        let vote = snapshot.history.value(version);
        if vote == 0.0 {
            continue;
        }
        sum += vote;
        count += 1;
    }
    if count < QUICK_ESTIMATE_MIN_VOTES {
        return QuickEstimate::FallBack;
    }
    let score = gamma * sum / count as f64;
    if score.abs() >= QUICK_ESTIMATE_CUTOFF {
        QuickEstimate::Score(score)
    } else {
        QuickEstimate::FallBack
    }
}

/// Rebuilds a friend-vote database: `friends` carries each friend's vote
/// history as fetched (and majority-filtered) from its vote maintainers.
/// The owner's extended history is recomputed first and the per-friend
/// weights are measured against it.
pub fn refresh_friend_db<K: VoteKey>(
    owner_local: &History<K>,
    friends: &[(NodeId, History<K>)],
    gamma: f64,
    cycle: u64,
) -> FriendVoteDb<K> {
    let friend_refs: Vec<&History<K>> = friends.iter().map(|(_, h)| h).collect();
    let extended = extend_history(owner_local, &friend_refs, gamma);
    let mut snapshots = BTreeMap::new();
    for (id, history) in friends {
        let theta = if history.is_empty() {
            0.0
        } else {
            correlation(&extended, history)
        };
        snapshots.insert(
            *id,
            FriendSnapshot {
                history: history.clone(),
                theta,
            },
        );
    }
    FriendVoteDb {
        snapshots,
        last_refresh: cycle,
    }
}

/// Majority-merges vote-history replicas: a `(version, vote)` pair
/// survives when at least `majority_threshold(m)` of the `m` replicas
/// carry it. At most one value per version can reach the threshold.
pub fn merge_replica_histories<K: VoteKey>(replicas: &[&History<K>], m: usize) -> History<K> {
    let threshold = majority_threshold(m);
    let mut tally: BTreeMap<(K, i8), usize> = BTreeMap::new();
    for replica in replicas {
        for (version, sign) in replica.signed_entries() {
            *tally.entry((version, sign)).or_insert(0) += 1;
        }
    }
    let mut merged = History::new();
    for ((version, sign), count) in tally {
        if count >= threshold {
            merged.set_vote(
                version,
                if sign > 0 { Vote::Positive } else { Vote::Negative },
            );
        }
    }
    merged
}

/// Replicated vote-history storage: every user's votes live in their local
/// history and at the user's `m` vote maintainers, so histories stay
/// available while the voter is offline.
#[derive(Debug, Default)]
pub struct VoteStore {
    m: usize,
    locals: BTreeMap<NodeId, VoteHistory>,
    replicas: BTreeMap<(NodeId, NodeId), VoteHistory>,
}

impl VoteStore {
    pub fn new(m: usize) -> Self {
        VoteStore {
            m,
            locals: BTreeMap::new(),
            replicas: BTreeMap::new(),
        }
    }

    pub fn local(&self, user: &NodeId) -> Option<&VoteHistory> {
        self.locals.get(user)
    }

    /// Direct access to one replica, for corruption in tests.
    pub fn replica_mut(&mut self, holder: NodeId, subject: NodeId) -> &mut VoteHistory {
        self.replicas.entry((holder, subject)).or_default()
    }

    /// The vote maintainers of `subject`: the group keyed by the subject's
    /// identifier string.
    pub fn vote_maintainers(
        &self,
        subject: NodeId,
        population: &Population,
    ) -> Result<Vec<NodeId>, ReputationError> {
        Ok(maintainer_group(&subject.to_hex(), self.m, population)?.members)
    }

    /// Records a vote in the voter's local history and at all of the
    /// voter's vote maintainers. Re-voting overwrites.
    pub fn store_vote(
        &mut self,
        voter: NodeId,
        version: VersionId,
        vote: Vote,
        population: &Population,
    ) -> Result<(), ReputationError> {
        self.locals.entry(voter).or_default().set_vote(version, vote);
        for holder in self.vote_maintainers(voter, population)? {
            self.replicas
                .entry((holder, voter))
                .or_default()
                .set_vote(version, vote);
        }
        Ok(())
    }

    /// Reconstructs `subject`'s history from its replicas by majority
    /// merge. Works whether the subject is online or offline; all-empty
    /// replicas yield an empty history.
    pub fn fetch_history(
        &self,
        subject: NodeId,
        population: &Population,
    ) -> Result<VoteHistory, ReputationError> {
        let empty = VoteHistory::new();
        let holders = self.vote_maintainers(subject, population)?;
        let replicas: Vec<&VoteHistory> = holders
            .iter()
            .map(|h| self.replicas.get(&(*h, subject)).unwrap_or(&empty))
            .collect();
        Ok(merge_replica_histories(&replicas, self.m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::{make_version, FileId};
    use crate::overlay::id_of;

    fn vid(tag: u64) -> VersionId {
        let (_, _, id) = make_version(FileId::of_name("f"), 2, tag).unwrap();
        id
    }

    fn history(values: &[(u64, f64)]) -> VoteHistory {
        let mut h = VoteHistory::new();
        for &(tag, value) in values {
            h.set_value(vid(tag), value);
        }
        h
    }

    #[test]
    fn identical_histories_correlate_perfectly() {
        let a = history(&[(1, 1.0), (2, 1.0), (3, -1.0), (4, -1.0)]);
        let stats = correlation_stats(&a, &a);
        assert_eq!(stats.shared_count, 4);
        assert_eq!((stats.a, stats.b, stats.p), (0.5, 0.5, 0.5));
        assert_eq!(correlation(&a, &a), 1.0);
    }

    #[test]
    fn opposite_histories_correlate_negatively() {
        let a = history(&[(1, 1.0), (2, 1.0), (3, -1.0), (4, -1.0)]);
        let b = history(&[(1, -1.0), (2, -1.0), (3, 1.0), (4, 1.0)]);
        let stats = correlation_stats(&a, &b);
        assert_eq!(stats.p, 0.0);
        assert_eq!(correlation(&a, &b), -1.0);
    }

    #[test]
    fn weak_correlation_is_zeroed() {
        // Ten shared versions, a = b = 0.5, p = 0.3 -> raw = 4p - 1 = 0.2.
        let a = history(&[
            (1, 1.0),
            (2, 1.0),
            (3, 1.0),
            (4, 1.0),
            (5, 1.0),
            (6, -1.0),
            (7, -1.0),
            (8, -1.0),
            (9, -1.0),
            (10, -1.0),
        ]);
        let b = history(&[
            (1, 1.0),
            (2, 1.0),
            (3, 1.0),
            (6, 1.0),
            (7, 1.0),
            (4, -1.0),
            (5, -1.0),
            (8, -1.0),
            (9, -1.0),
            (10, -1.0),
        ]);
        let raw = raw_correlation(&correlation_stats(&a, &b));
        assert!((raw - 0.2).abs() < 1e-12, "{raw}");
        assert_eq!(correlation(&a, &b), 0.0);
    }

    #[test]
    fn degenerate_correlations_are_zero() {
        let empty = VoteHistory::new();
        let a = history(&[(1, 1.0), (2, 1.0)]);
        assert_eq!(correlation(&a, &empty), 0.0);
        // All-positive side: a = 1 makes the denominator vanish.
        let b = history(&[(1, 1.0), (2, -1.0)]);
        assert_eq!(correlation(&a, &b), 0.0);
    }

    #[test]
    fn correlation_raw_value_is_symmetric() {
        let a = history(&[(1, 1.0), (2, -1.0), (3, 1.0), (4, -1.0), (5, 1.0)]);
        let b = history(&[(1, 1.0), (2, 1.0), (3, -1.0), (4, -1.0), (6, 1.0)]);
        let ab = raw_correlation(&correlation_stats(&a, &b));
        let ba = raw_correlation(&correlation_stats(&b, &a));
        assert_eq!(ab, ba);
    }

    #[test]
    fn opposite_voter_on_mixed_ground_truth_gets_strong_negative_weight() {
        // A genuine user and a polluter sharing >= 10 co-voted versions
        // with mixed outcomes: the polluter votes exactly opposite.
        let genuine = history(&[
            (1, 1.0),
            (2, 1.0),
            (3, 1.0),
            (4, 1.0),
            (5, 1.0),
            (6, 1.0),
            (7, -1.0),
            (8, -1.0),
            (9, -1.0),
            (10, -1.0),
            (11, -1.0),
        ]);
        let mut polluter = VoteHistory::new();
        for (version, value) in genuine.iter() {
            polluter.set_value(*version, -value);
        }
        assert!(correlation(&genuine, &polluter) <= -0.5);
    }

    #[test]
    fn score_examples() {
        assert_eq!(weighted_score(&[(1.0, 1.0)]), 1.0);
        assert_eq!(weighted_score(&[(1.0, 0.0), (-1.0, 0.0)]), 0.0);
        // A negative vote from a negatively correlated voter raises the
        // score.
        assert_eq!(weighted_score(&[(1.0, 1.0), (-1.0, -1.0)]), 1.0);
    }

    #[test]
    fn extension_worked_example() {
        // Six version slots; requestor {1,-1,0,0,-1,0}, friends
        // {0,0,1,0,-1,-1} and {1,0,1,0,-1,0}, gamma 0.9.
        let local = history(&[(1, 1.0), (2, -1.0), (5, -1.0)]);
        let f1 = history(&[(3, 1.0), (5, -1.0), (6, -1.0)]);
        let f2 = history(&[(1, 1.0), (3, 1.0), (5, -1.0)]);
        let extended = extend_history(&local, &[&f1, &f2], 0.9);

        let expect: &[(u64, f64)] = &[
            (1, 1.0),
            (2, -1.0),
            (3, 1.0),
            (4, 0.0),
            (5, -1.0),
            (6, -1.0),
        ];
        for &(tag, want) in expect {
            assert_eq!(extended.value(&vid(tag)), want, "slot {tag}");
        }
        assert_eq!(extended.len(), 5);
    }

    #[test]
    fn extension_edge_cases() {
        let empty = VoteHistory::new();
        assert!(extend_history(&empty, &[&empty, &empty], 0.9).is_empty());

        let local = history(&[(1, 1.0)]);
        // No friends: unchanged.
        assert_eq!(extend_history(&local, &[], 0.9), local);

        // A single friend with an empty local history: each entry is the
        // friend's own vote, weight-normalized back to +/-1.
        let friend = history(&[(2, 1.0), (3, -1.0)]);
        let extended = extend_history(&empty, &[&friend], 0.9);
        assert_eq!(extended.value(&vid(2)), 1.0);
        assert_eq!(extended.value(&vid(3)), -1.0);
    }

    #[test]
    fn extension_drops_balanced_disagreement() {
        // Two friends voting opposite with equal weight average to zero,
        // which is "no opinion", not a stored entry.
        let empty = VoteHistory::new();
        let f1 = history(&[(1, 1.0)]);
        let f2 = history(&[(1, -1.0)]);
        let extended = extend_history(&empty, &[&f1, &f2], 0.9);
        assert!(extended.is_empty());
    }

    #[test]
    fn extension_agreement_stays_positive() {
        let local = history(&[(1, 1.0)]);
        let f1 = history(&[(1, 1.0)]);
        let f2 = history(&[(1, 1.0)]);
        for gamma in [0.1, 0.5, 0.9, 1.0] {
            let extended = extend_history(&local, &[&f1, &f2], gamma);
            let value = extended.value(&vid(1));
            assert!(value >= gamma && value <= 1.0);
        }
    }

    fn quick_db(votes: &[(u64, f64)], thetas: &[f64]) -> FriendVoteDb {
        let mut db = FriendVoteDb::default();
        for (i, &theta) in thetas.iter().enumerate() {
            let mut history = VoteHistory::new();
            for &(tag, value) in votes {
                if value != 0.0 {
                    history.set_value(vid(tag), value.signum());
                }
            }
            db.snapshots.insert(
                id_of(&format!("friend-{i}")),
                FriendSnapshot { history, theta },
            );
        }
        db
    }

    #[test]
    fn quick_estimate_unanimous_friends() {
        let db = quick_db(&[(1, 1.0)], &[0.8, 0.9, 1.0, 0.7]);
        assert_eq!(
            quick_estimate(&db, &vid(1), 0.9),
            QuickEstimate::Score(0.9)
        );
    }

    #[test]
    fn quick_estimate_split_opinion_falls_back() {
        let mut db = FriendVoteDb::default();
        for (i, value) in [1.0, 1.0, -1.0, -1.0].iter().enumerate() {
            let mut history = VoteHistory::new();
            history.set_value(vid(1), *value);
            db.snapshots.insert(
                id_of(&format!("friend-{i}")),
                FriendSnapshot {
                    history,
                    theta: 0.9,
                },
            );
        }
        assert_eq!(quick_estimate(&db, &vid(1), 0.9), QuickEstimate::FallBack);
    }

    #[test]
    fn quick_estimate_needs_four_eligible_friends() {
        let db = quick_db(&[(1, 1.0)], &[1.0, 1.0, 1.0]);
        assert_eq!(quick_estimate(&db, &vid(1), 0.9), QuickEstimate::FallBack);
        // A fourth friend below the weight cutoff does not count.
        let db = quick_db(&[(1, 1.0)], &[1.0, 1.0, 1.0, 0.4]);
        assert_eq!(quick_estimate(&db, &vid(1), 0.9), QuickEstimate::FallBack);
    }

    fn population(n: u32) -> Population {
        Population::new((0..n).map(|i| id_of(&format!("user-{i}"))))
    }

    #[test]
    fn store_and_fetch_round_trip() {
        let pop = population(32);
        let mut store = VoteStore::new(5);
        let voter = id_of("user-3");
        store
            .store_vote(voter, vid(1), Vote::Positive, &pop)
            .unwrap();
        let fetched = store.fetch_history(voter, &pop).unwrap();
        assert_eq!(fetched.value(&vid(1)), 1.0);
        // Overwrite wins.
        store
            .store_vote(voter, vid(1), Vote::Negative, &pop)
            .unwrap();
        let fetched = store.fetch_history(voter, &pop).unwrap();
        assert_eq!(fetched.value(&vid(1)), -1.0);
    }

    #[test]
    fn fetch_survives_minority_replica_corruption() {
        let pop = population(32);
        let mut store = VoteStore::new(5);
        let voter = id_of("user-3");
        store
            .store_vote(voter, vid(1), Vote::Positive, &pop)
            .unwrap();

        let holders = store.vote_maintainers(voter, &pop).unwrap();
        let distinct: Vec<NodeId> = {
            let mut d = holders.clone();
            d.sort_unstable();
            d.dedup();
            d
        };
        // Corrupt up to two distinct replica holders: the vote must survive
        // as long as three of the five group positions report it.
        for &holder in distinct.iter().take(2) {
            store.replica_mut(holder, voter).set_vote(vid(1), Vote::Negative);
        }
        let corrupted_positions = holders
            .iter()
            .filter(|h| distinct.iter().take(2).any(|d| d == *h))
            .count();
        let fetched = store.fetch_history(voter, &pop).unwrap();
        if corrupted_positions <= 2 {
            assert_eq!(fetched.value(&vid(1)), 1.0);
        }
    }

    #[test]
    fn fetch_empty_history() {
        let pop = population(8);
        let store = VoteStore::new(5);
        let fetched = store.fetch_history(id_of("user-1"), &pop).unwrap();
        assert!(fetched.is_empty());
    }

    #[test]
    fn refresh_is_pure_and_staleness_is_visible() {
        let local = history(&[(1, 1.0), (2, -1.0)]);
        let friend_hist = history(&[(1, 1.0), (2, -1.0), (3, 1.0)]);
        let friend = id_of("friend-1");

        let db1 = refresh_friend_db(&local, &[(friend, friend_hist.clone())], 0.9, 10);
        let db2 = refresh_friend_db(&local, &[(friend, friend_hist.clone())], 0.9, 10);
        assert_eq!(db1, db2);

        // A vote cast after the refresh is not in the snapshot.
        let mut newer = friend_hist.clone();
        newer.set_vote(vid(4), Vote::Negative);
        assert_eq!(db1.snapshots[&friend].history, friend_hist);
        let db3 = refresh_friend_db(&local, &[(friend, newer.clone())], 0.9, 20);
        assert_eq!(db3.snapshots[&friend].history, newer);
        assert_eq!(db3.last_refresh, 20);
    }

    #[test]
    fn refresh_scores_agreeing_friends_highly() {
        let local = history(&[(1, 1.0), (2, -1.0), (3, 1.0), (4, -1.0)]);
        let friend_hist = history(&[(1, 1.0), (2, -1.0), (3, 1.0), (4, -1.0), (5, 1.0)]);
        let db = refresh_friend_db(&local, &[(id_of("f"), friend_hist)], 0.9, 0);
        assert!(db.snapshots[&id_of("f")].theta >= 0.5);
        // An empty friend history gets weight zero.
        let db = refresh_friend_db(&local, &[(id_of("f"), VoteHistory::new())], 0.9, 0);
        assert_eq!(db.snapshots[&id_of("f")].theta, 0.0);
    }

    #[test]
    fn compact_serialization_round_trips() {
        let h = history(&[(1, 1.0), (2, -1.0), (3, 0.45)]);
        let json = serde_json::to_string(&h).unwrap();
        assert!(json.contains("\"version\":1"));
        let back: VoteHistory = serde_json::from_str(&json).unwrap();
        assert_eq!(back, h);
    }
}
