//! Query-cycle execution: per cycle, one uniformly chosen user queries a
//! popularity-sampled file and runs its pipeline end to end (query,
//! filter, reputation, selection, download with verification, vote,
//! share/delete, retry).
//!
//! Selection over a file's versions uses envelope rejection sampling:
//! draw proportionally to provider counts (a Fenwick prefix draw), then
//! accept with probability `(rep + 1) / 2`. Accepted draws follow exactly
//! the `count * (rep + 1)` law, and reputation is computed only for drawn
//! candidates, never for the whole version table. A capped number of
//! consecutive rejections falls back to the exact cumulative scan, which
//! also handles the all-weights-zero ad hoc case.

use crate::adversary::malicious_vote;
use crate::content::{FileInfoRecord, MaintainerResponse};
use crate::filtering::majority_filter;
use crate::harness::world::{HeldCopy, RepEntry, ThetaEntry, UserIx, VersionIx, World};
use crate::harness::world::FileIx;
use crate::reputation::{correlation, quick_estimate, weighted_score, QuickEstimate, Vote};
use crate::verification::{download, DownloadOutcome};
use rand::seq::index;
use rand::Rng;

/// Consecutive envelope rejections before switching to the exact scan.
const REJECTION_CAP: u32 = 64;

/// Deferred fenwick updates gathered during one query: provider-count
/// deltas are applied after the per-query exclusions are restored, so an
/// excluded version cannot re-enter selection mid-query.
struct QueryScope {
    exclusions: Vec<(u32, i64)>,
    provider_deltas: Vec<(u32, i64)>,
}

impl QueryScope {
    fn new() -> Self {
        QueryScope {
            exclusions: Vec::new(),
            provider_deltas: Vec::new(),
        }
    }
}

impl World {
    /// Runs one query cycle and advances the clock.
    pub fn run_query_cycle(&mut self) {
        if self.query_cycle > 0 && self.query_cycle % self.cfg.friend_db_refresh_period == 0 {
            if self.social_enabled() {
                self.refresh_friend_dbs();
            }
            // Memory guard; entries refresh on their own as histories grow.
            if self.theta_cache.len() > 8_000_000 {
                self.theta_cache.clear();
            }
            if self.rep_cache.len() > 4_000_000 {
                self.rep_cache.clear();
            }
        }
        let u = self.streams.requestor.random_range(0..self.users.len()) as UserIx;
        let f = self.file_zipf.sample(&mut self.streams.file_pick) as FileIx;
        if self.users[u as usize].label.is_genuine() {
            self.genuine_query(u, f);
        } else {
            self.polluter_query(u, f);
        }
        self.query_cycle += 1;
    }

    /// Full genuine-user pipeline with in-cycle retry after detected or
    /// discovered pollution, capped at the file's candidate count.
    fn genuine_query(&mut self, u: UserIx, f: FileIx) {
        if self.cfg.scenario.maintainer_corruption_rate > 0.0 {
            self.genuine_query_filtered(u, f);
            return;
        }
        if self.cfg.strategy.query_redundancy(self.cfg.maintainer_group_size) > 1 {
            self.op_counters.filtered_queries += 1;
        }

        let uses_rep = self.cfg.strategy.uses_reputation();
        let verify = self.cfg.strategy.verifies_downloads();
        let candidate_cap = self.files[f as usize].version_slots.len();
        let mut scope = QueryScope::new();
        let mut accepted_any = false;

        for _ in 0..candidate_cap {
            let picked = if uses_rep {
                self.pick_reputation_weighted(f, u)
            } else {
                self.pick_provider_proportional(f)
            };
            let Some(v) = picked else { break };

            let outcome = self.download_version(v, verify);
            if self.finish_download(u, f, v, &outcome, &mut scope, &mut accepted_any) {
                break;
            }
        }

        if !accepted_any {
            self.counters.failed_queries += 1;
        }
        self.close_scope(f, scope);
    }

    /// Handles one completed download; returns true when the query is
    /// satisfied (an authentic copy was acquired).
    fn finish_download(
        &mut self,
        u: UserIx,
        f: FileIx,
        v: VersionIx,
        outcome: &DownloadOutcome,
        scope: &mut QueryScope,
        accepted_any: &mut bool,
    ) -> bool {
        let decoy = self.versions[v as usize].decoy;
        let polluted = outcome.polluted(!decoy);
        if polluted {
            self.counters.polluted_attempts += 1;
        }

        if !outcome.accepted {
            // Verification dropped a mismatching block mid-download: no
            // copy acquired. Vote and move on to the next candidate.
            self.maybe_genuine_vote(u, v, Vote::Negative);
            self.exclude(f, v, scope);
            return false;
        }

        *accepted_any = true;
        self.counters.total_downloads += 1;

        if polluted {
            // Discovered on use, after acceptance: vote it down, maybe
            // delete it, and go back to version selection.
            self.counters.polluted_accepted += 1;
            self.maybe_genuine_vote(u, v, Vote::Negative);
            if self.streams.votes.random_bool(self.cfg.delete_probability) {
                self.withdraw_copy(u, v, scope);
            } else {
                self.keep_copy(u, v, &outcome.received_corrupted, scope, false);
            }
            self.exclude(f, v, scope);
            return false;
        }

        self.counters.authentic_downloads += 1;
        self.maybe_genuine_vote(u, v, Vote::Positive);
        self.keep_copy(u, v, &[], scope, false);
        true
    }

    /// Polluters select by availability, never verify, always vote
    /// maliciously on what they received, keep and share everything, and
    /// never overwrite their own attack copies.
    fn polluter_query(&mut self, u: UserIx, f: FileIx) {
        let Some(v) = self.pick_provider_proportional(f) else {
            return;
        };
        let outcome = self.download_version(v, false);
        let decoy = self.versions[v as usize].decoy;
        let assembly_authentic = !decoy && outcome.received_corrupted.is_empty();
        let vote = malicious_vote(
            assembly_authentic,
            self.cfg.scenario.voting_strategy,
            &mut self.streams.votes,
        );
        self.cast_vote(u, v, vote);

        if !self.users[u as usize].holdings.contains_key(&v) {
            let mut scope = QueryScope::new();
            self.keep_copy(u, v, &outcome.received_corrupted, &mut scope, true);
            self.close_scope(f, scope);
        }
    }

    fn download_version(&mut self, v: VersionIx, verify: bool) -> DownloadOutcome {
        let version = &self.versions[v as usize];
        let plan = if verify {
            &self.verify_plan
        } else {
            &self.no_verify_plan
        };
        download(
            &version.instance,
            &version.record.provider_ids,
            plan,
            &mut self.streams.verify,
        )
        .expect("selection only yields provider-backed versions")
    }

    /// Provider-proportional draw (the baseline law, and the envelope of
    /// the reputation-weighted law).
    fn pick_provider_proportional(&mut self, f: FileIx) -> Option<VersionIx> {
        let file = &self.files[f as usize];
        let total = file.fenwick.total();
        if total == 0 {
            return None;
        }
        let target = self.streams.selection.random_range(0..total);
        let slot = file.fenwick.sample(target);
        Some(file.version_slots[slot])
    }

    /// Envelope rejection sampling of `count * (rep + 1)`.
    fn pick_reputation_weighted(&mut self, f: FileIx, u: UserIx) -> Option<VersionIx> {
        let mut rejections = 0u32;
        loop {
            let v = self.pick_provider_proportional(f)?;
            let rep = self.rep_of(u, v);
            let accept = ((rep + 1.0) / 2.0).clamp(0.0, 1.0);
            if self.streams.selection.random_bool(accept) {
                return Some(v);
            }
            rejections += 1;
            if rejections >= REJECTION_CAP {
                self.op_counters.exact_selection_fallbacks += 1;
                return self.pick_exact(f, u);
            }
        }
    }

    /// Exact cumulative scan over the file's provider-backed versions;
    /// uniform ad hoc pick when every weight is zero.
    fn pick_exact(&mut self, f: FileIx, u: UserIx) -> Option<VersionIx> {
        let slots: Vec<(VersionIx, i64)> = {
            let file = &self.files[f as usize];
            file.version_slots
                .iter()
                .enumerate()
                .filter_map(|(slot, &v)| {
                    let count = file.fenwick.value(slot);
                    (count > 0).then_some((v, count))
                })
                .collect()
        };
        if slots.is_empty() {
            return None;
        }
        let mut weights = Vec::with_capacity(slots.len());
        let mut total = 0.0f64;
        for &(v, count) in &slots {
            let rep = self.rep_of(u, v);
            let w = count as f64 * (rep + 1.0);
            weights.push(w);
            total += w;
        }
        if total > 0.0 {
            let target = self.streams.selection.random::<f64>() * total;
            let mut acc = 0.0;
            for (i, &w) in weights.iter().enumerate() {
                acc += w;
                if target < acc {
                    return Some(slots[i].0);
                }
            }
            // Floating shortfall at the very top.
            for (i, &w) in weights.iter().enumerate().rev() {
                if w > 0.0 {
                    return Some(slots[i].0);
                }
            }
            return None;
        }
        // Every reputation sits at -1: ad hoc uniform selection.
        let pick = self.streams.selection.random_range(0..slots.len());
        Some(slots[pick].0)
    }

    /// Reputation of `v` in the eyes of `u`: the friend-vote quick
    /// estimate when the social pipeline allows it, otherwise the full
    /// weighted score over a sample of the version's voters. Scores are
    /// cached per (user, version) and recomputed when new votes arrive on
    /// the version or the refresh window turns over.
    fn rep_of(&mut self, u: UserIx, v: VersionIx) -> f64 {
        let version_id = self.versions[v as usize].record.version_id;
        if self.social_enabled() && !self.users[u as usize].friend_db.snapshots.is_empty() {
            if let QuickEstimate::Score(score) = quick_estimate(
                &self.users[u as usize].friend_db,
                &version_id,
                self.cfg.gamma,
            ) {
                self.op_counters.quick_estimate_hits += 1;
                return score;
            }
        }
        let vote_seq = self.versions[v as usize].vote_seq;
        if let Some(entry) = self.rep_cache.get(&(u, v)) {
            if entry.fresh_for(vote_seq) {
                return entry.score;
            }
        }
        let oil_len = self.versions[v as usize].record.voter_ids.len();
        let score = self.compute_reputation(u, v);
        self.rep_cache.insert(
            (u, v),
            RepEntry {
                score,
                vote_seq,
                oil_len: oil_len.min(u32::MAX as usize) as u32,
            },
        );
        score
    }

    fn compute_reputation(&mut self, u: UserIx, v: VersionIx) -> f64 {
        self.op_counters.reputation_scores += 1;
        let version_id = self.versions[v as usize].record.version_id;
        let oil_len = self.versions[v as usize].voter_ixs.len();
        if oil_len == 0 {
            return 0.0;
        }
        let cap = self.cfg.voter_sample_cap;
        let voters: Vec<UserIx> = if oil_len > cap {
            index::sample(&mut self.streams.voters, oil_len, cap)
                .into_iter()
                .map(|i| self.versions[v as usize].voter_ixs[i])
                .collect()
        } else {
            self.versions[v as usize].voter_ixs.clone()
        };
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(voters.len());
        for voter in voters {
            let vote = self.users[voter as usize]
                .local_history
                .value(&version_id);
            if vote == 0.0 {
                continue;
            }
            let theta = self.theta_of(u, voter);
            pairs.push((vote, theta));
        }
        weighted_score(&pairs)
    }

    /// Correlation weight between requestor `u` and `voter`, cached until
    /// either side's history has grown materially. Social strategies
    /// correlate against the extended history; the others use the plain
    /// local history.
    fn theta_of(&mut self, u: UserIx, voter: UserIx) -> f64 {
        let requestor_history = if self.social_enabled() {
            &self.users[u as usize].extended_history
        } else {
            &self.users[u as usize].local_history
        };
        let r_len = requestor_history.len();
        let o_len = self.users[voter as usize].local_history.len();
        if let Some(entry) = self.theta_cache.get(&(u, voter)) {
            if entry.fresh_for(r_len, o_len) {
                return entry.theta;
            }
        }
        self.op_counters.correlation_computations += 1;
        let theta = correlation(requestor_history, &self.users[voter as usize].local_history);
        self.theta_cache.insert(
            (u, voter),
            ThetaEntry {
                theta,
                r_len: r_len.min(u32::MAX as usize) as u32,
                o_len: o_len.min(u32::MAX as usize) as u32,
            },
        );
        theta
    }

    fn maybe_genuine_vote(&mut self, u: UserIx, v: VersionIx, correct: Vote) {
        if !self.streams.votes.random_bool(self.cfg.vote_probability) {
            return;
        }
        let vote = if self.streams.votes.random_bool(self.cfg.vote_noise) {
            correct.flipped()
        } else {
            correct
        };
        self.cast_vote(u, v, vote);
    }

    /// Records a vote: the voter's local history (and incrementally its
    /// extended history), the version's voter list at the maintainers,
    /// and the vote sequence number.
    fn cast_vote(&mut self, u: UserIx, v: VersionIx, vote: Vote) {
        let version_id = self.versions[v as usize].record.version_id;
        self.users[u as usize]
            .local_history
            .set_vote(version_id, vote);
        if self.social_enabled() && self.users[u as usize].label.is_genuine() {
            self.refresh_extended_entry(u, version_id);
        }
        let user_id = self.users[u as usize].id;
        let state = &mut self.versions[v as usize];
        state.vote_seq += 1;
        if state.record.add_voter(user_id) {
            state.voter_ixs.push(u);
        }
    }

    /// Stores a copy in the user's shared folder and publishes the user
    /// as a provider. `preserve_existing` keeps an already-held copy
    /// (polluters never overwrite their seeded attack copies).
    fn keep_copy(
        &mut self,
        u: UserIx,
        v: VersionIx,
        corrupted: &[u16],
        scope: &mut QueryScope,
        preserve_existing: bool,
    ) {
        let user_id = self.users[u as usize].id;
        let holdings = &mut self.users[u as usize].holdings;
        if preserve_existing && holdings.contains_key(&v) {
            return;
        }
        holdings.insert(
            v,
            HeldCopy {
                corrupted: corrupted.into(),
            },
        );
        let state = &mut self.versions[v as usize];
        if corrupted.is_empty() {
            state.instance.per_provider_corruption.remove(&user_id);
        } else {
            state
                .instance
                .corrupt_copy(user_id, corrupted.iter().copied().collect());
        }
        if state.record.add_provider(user_id) {
            scope.provider_deltas.push((state.slot, 1));
        }
    }

    /// Deletes the user's copy (if any) and withdraws the provider entry.
    fn withdraw_copy(&mut self, u: UserIx, v: VersionIx, scope: &mut QueryScope) {
        let user_id = self.users[u as usize].id;
        if self.users[u as usize].holdings.remove(&v).is_none() {
            return;
        }
        let state = &mut self.versions[v as usize];
        state.instance.per_provider_corruption.remove(&user_id);
        if state.record.remove_provider(&user_id) {
            scope.provider_deltas.push((state.slot, -1));
        }
    }

    /// Zeroes a version's selection weight for the rest of this query.
    fn exclude(&mut self, f: FileIx, v: VersionIx, scope: &mut QueryScope) {
        let slot = self.versions[v as usize].slot;
        let current = self.files[f as usize].fenwick.value(slot as usize);
        if current > 0 {
            self.files[f as usize].fenwick.add(slot as usize, -current);
        }
        scope.exclusions.push((slot, current));
    }

    /// Restores exclusions, then applies the provider deltas deferred
    /// during the query.
    fn close_scope(&mut self, f: FileIx, scope: QueryScope) {
        let fenwick = &mut self.files[f as usize].fenwick;
        for (slot, subtracted) in scope.exclusions {
            if subtracted != 0 {
                fenwick.add(slot as usize, subtracted);
            }
        }
        for (slot, delta) in scope.provider_deltas {
            fenwick.add(slot as usize, delta);
        }
    }

    /// Slow-path genuine query under active maintainer corruption: build
    /// each maintainer's response (honest maintainers all serve the
    /// canonical table), corrupt the malicious ones, majority-filter, and
    /// run selection over the reconstructed records. Fabricated records
    /// that survive filtering but name unknown versions cannot be
    /// downloaded in-model and drop out as failed candidates.
    fn genuine_query_filtered(&mut self, u: UserIx, f: FileIx) {
        self.op_counters.filtered_queries += 1;
        let m = self
            .cfg
            .strategy
            .query_redundancy(self.cfg.maintainer_group_size);
        let honest: Vec<FileInfoRecord> = self.files[f as usize]
            .version_slots
            .iter()
            .map(|&v| self.versions[v as usize].record.clone())
            .filter(|r| !r.provider_ids.is_empty() || !r.voter_ids.is_empty())
            .collect();
        let maintainers: Vec<_> = self.files[f as usize].maintainers[..m].to_vec();
        let responses: Vec<MaintainerResponse> = maintainers
            .into_iter()
            .map(|maintainer| {
                let malicious = !self.users[self.user_index[&maintainer] as usize]
                    .label
                    .is_genuine();
                let records = if malicious {
                    self.corrupter.corrupt(&honest, &mut self.streams.corruption)
                } else {
                    honest.clone()
                };
                MaintainerResponse {
                    maintainer,
                    records,
                }
            })
            .collect();
        let filtered = majority_filter(&responses, m);

        let uses_rep = self.cfg.strategy.uses_reputation();
        let verify = self.cfg.strategy.verifies_downloads();
        // Candidates carry the reconstructed provider lists; downloads in
        // this path are taken from the filtered view, not the canonical
        // table.
        let mut candidates: Vec<(VersionIx, Vec<crate::overlay::NodeId>)> = filtered
            .into_iter()
            .filter_map(|record| {
                let &ix = self.version_index.get(&record.version_id)?;
                debug_assert_eq!(self.versions[ix as usize].file, f);
                (!record.provider_ids.is_empty()).then_some((ix, record.provider_ids))
            })
            .collect();

        let mut scope = QueryScope::new();
        let mut accepted_any = false;
        while !candidates.is_empty() {
            let mut weights = Vec::with_capacity(candidates.len());
            let mut total = 0.0f64;
            for (v, providers) in &candidates {
                let rep = if uses_rep { self.rep_of(u, *v) } else { 0.0 };
                let w = providers.len() as f64 * (rep + 1.0);
                weights.push(w);
                total += w;
            }
            let pick = if total > 0.0 {
                let target = self.streams.selection.random::<f64>() * total;
                let mut acc = 0.0;
                let mut chosen = candidates.len() - 1;
                for (i, &w) in weights.iter().enumerate() {
                    acc += w;
                    if target < acc {
                        chosen = i;
                        break;
                    }
                }
                chosen
            } else {
                self.streams.selection.random_range(0..candidates.len())
            };
            let (v, providers) = candidates.swap_remove(pick);

            let outcome = {
                let version = &self.versions[v as usize];
                let plan = if verify {
                    &self.verify_plan
                } else {
                    &self.no_verify_plan
                };
                download(&version.instance, &providers, plan, &mut self.streams.verify)
                    .expect("filtered candidates keep their providers")
            };
            if self.finish_download(u, f, v, &outcome, &mut scope, &mut accepted_any) {
                break;
            }
        }
        if !accepted_any {
            self.counters.failed_queries += 1;
        }
        self.close_scope(f, scope);
    }
}
