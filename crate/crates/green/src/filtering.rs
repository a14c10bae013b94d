//! Proactive majority filtering of maintainer responses, plus the
//! binomial reliability calculator used to size maintainer groups against
//! an assumed fraction of malicious users.

use crate::content::{DigestList, FileInfoRecord, MaintainerResponse};
use crate::overlay::NodeId;
use crate::content::VersionId;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use thiserror::Error;

/// Tally of one `(version, provider)` or `(version, voter)` pair over the
/// mixed response list. Each maintainer contributes a given pair at most
/// once, so `0 < count <= m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairTally {
    pub version_id: VersionId,
    pub subject: NodeId,
    pub count: usize,
}

/// Parameters of the reliability model: group size `m` and the assumed
/// total fraction `beta` of malicious and compromised users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub m: usize,
    pub beta: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("group size must be at least 1")]
    ZeroGroupSize,
    #[error("beta must lie in [0, 1), got {0}")]
    InvalidBeta(f64),
    #[error("target reliability must lie in (0, 1], got {0}")]
    InvalidTarget(f64),
    #[error("a majority of honest maintainers cannot be guaranteed for beta_worst >= 0.5")]
    Infeasible,
    #[error("no group size up to {cap} reaches the target reliability")]
    CapExceeded { cap: usize },
}

/// Pairs seen fewer than this many times across the `m` responses are
/// discarded: `ceil((m + 1) / 2)`.
pub fn majority_threshold(m: usize) -> usize {
    (m + 1).div_ceil(2)
}

/// Probability that fewer than half of a group of `m` maintainers are
/// malicious when maliciousness is i.i.d. with rate `beta`:
/// the binomial lower tail up to `floor((m - 1) / 2)`.
pub fn group_reliability(params: &FilterParams) -> Result<f64, FilterError> {
    if params.m == 0 {
        return Err(FilterError::ZeroGroupSize);
    }
    if !(0.0..1.0).contains(&params.beta) {
        return Err(FilterError::InvalidBeta(params.beta));
    }
    let m = params.m;
    let beta = params.beta;
    let mut sum = 0.0f64;
    for x in 0..=(m - 1) / 2 {
        sum += binomial(m, x) * beta.powi(x as i32) * (1.0 - beta).powi((m - x) as i32);
    }
    Ok(sum.min(1.0))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Default cap on the group-size scan.
pub const DEFAULT_GROUP_SIZE_CAP: usize = 99;

/// Smallest odd `m` whose group reliability at `beta_worst` reaches
/// `target`. Even sizes never help: they add a maintainer without raising
/// the honest-majority count.
pub fn min_group_size(
    beta_worst: f64,
    target: f64,
    cap: usize,
) -> Result<usize, FilterError> {
    if !(0.0..1.0).contains(&beta_worst) {
        return Err(FilterError::InvalidBeta(beta_worst));
    }
    if beta_worst >= 0.5 {
        return Err(FilterError::Infeasible);
    }
    if !(target > 0.0 && target <= 1.0) {
        return Err(FilterError::InvalidTarget(target));
    }
    let mut m = 1;
    while m <= cap {
        let reliability = group_reliability(&FilterParams { m, beta: beta_worst })?;
        if reliability >= target {
            return Ok(m);
        }
        m += 2;
    }
    Err(FilterError::CapExceeded { cap })
}

/// Rebuilds the file's index table from the mixed maintainer responses.
///
/// `(version, provider)` and `(version, voter)` pairs are tallied over the
/// responses, counting each pair once per maintainer, and survive when
/// seen at least `majority_threshold(m)` times. Digest lists are checked
/// the cheap way first: a reported `(version, digest-list)` binding whose
/// digest list hashes to the version identifier is accepted as is, and
/// inconsistent bindings are discarded outright. A consistent binding
/// fabricated together with its fresh version identifier still dies in the
/// pair tally, since fewer than a majority of maintainers report it.
///
/// Records whose surviving provider list is non-empty but whose digest
/// list could not be recovered are dropped: they could not be verified
/// during download anyway. Voter-only records survive without one.
pub fn majority_filter(responses: &[MaintainerResponse], m: usize) -> Vec<FileInfoRecord> {
    let threshold = majority_threshold(m);

    let mut provider_tally: HashMap<(VersionId, NodeId), usize> = HashMap::new();
    let mut voter_tally: HashMap<(VersionId, NodeId), usize> = HashMap::new();
    let mut valid_digests: BTreeMap<VersionId, DigestList> = BTreeMap::new();

    for response in responses {
        let mut seen: HashSet<(u8, VersionId, NodeId)> = HashSet::new();
        for record in &response.records {
            if let Some(dl) = &record.digest_list {
                if dl.version_id() == record.version_id {
                    valid_digests
                        .entry(record.version_id)
                        .or_insert_with(|| dl.clone());
                }
            }
            for &p in &record.provider_ids {
                if seen.insert((0, record.version_id, p)) {
                    *provider_tally.entry((record.version_id, p)).or_insert(0) += 1;
                }
            }
            for &o in &record.voter_ids {
                if seen.insert((1, record.version_id, o)) {
                    *voter_tally.entry((record.version_id, o)).or_insert(0) += 1;
                }
            }
        }
    }

    let mut rebuilt: BTreeMap<VersionId, FileInfoRecord> = BTreeMap::new();
    for ((vid, provider), count) in provider_tally {
        if count >= threshold {
            rebuilt
                .entry(vid)
                .or_insert_with(|| FileInfoRecord::new(vid, None))
                .add_provider(provider);
        }
    }
    for ((vid, voter), count) in voter_tally {
        if count >= threshold {
            rebuilt
                .entry(vid)
                .or_insert_with(|| FileInfoRecord::new(vid, None))
                .add_voter(voter);
        }
    }

    rebuilt
        .into_values()
        .filter_map(|mut record| {
            match valid_digests.get(&record.version_id) {
                Some(dl) => record.digest_list = Some(dl.clone()),
                None if !record.provider_ids.is_empty() => return None,
                None => {}
            }
            Some(record)
        })
        .collect()
}

/// Pair tallies for inspection and tests, sorted by version then subject.
pub fn tally_provider_pairs(responses: &[MaintainerResponse]) -> Vec<PairTally> {
    let mut tally: BTreeMap<(VersionId, NodeId), usize> = BTreeMap::new();
    for response in responses {
        let mut seen: BTreeSet<(VersionId, NodeId)> = BTreeSet::new();
        for record in &response.records {
            for &p in &record.provider_ids {
                if seen.insert((record.version_id, p)) {
                    *tally.entry((record.version_id, p)).or_insert(0) += 1;
                }
            }
        }
    }
    tally
        .into_iter()
        .map(|((version_id, subject), count)| PairTally {
            version_id,
            subject,
            count,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::{make_version, FileId, MaintainerResponse};
    use crate::overlay::id_of;

    fn record_with(
        vid: VersionId,
        dl: Option<DigestList>,
        providers: &[NodeId],
        voters: &[NodeId],
    ) -> FileInfoRecord {
        let mut r = FileInfoRecord::new(vid, dl);
        for &p in providers {
            r.add_provider(p);
        }
        for &o in voters {
            r.add_voter(o);
        }
        r
    }

    fn responses_from(records_per_maintainer: Vec<Vec<FileInfoRecord>>) -> Vec<MaintainerResponse> {
        records_per_maintainer
            .into_iter()
            .enumerate()
            .map(|(i, records)| MaintainerResponse {
                maintainer: id_of(&format!("m-{i}")),
                records,
            })
            .collect()
    }

    #[test]
    fn threshold_values() {
        assert_eq!(majority_threshold(1), 1);
        assert_eq!(majority_threshold(3), 2);
        assert_eq!(majority_threshold(5), 3);
        assert_eq!(majority_threshold(4), 3);
    }

    #[test]
    fn reliability_matches_hand_values() {
        let p = group_reliability(&FilterParams { m: 5, beta: 0.2 }).unwrap();
        assert!((p - 0.94208).abs() < 1e-12, "{p}");
        let p = group_reliability(&FilterParams { m: 3, beta: 0.2 }).unwrap();
        assert!((p - 0.896).abs() < 1e-12, "{p}");
        let p = group_reliability(&FilterParams { m: 1, beta: 0.5 }).unwrap();
        assert!((p - 0.5).abs() < 1e-12, "{p}");
        let p = group_reliability(&FilterParams { m: 7, beta: 0.0 }).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn reliability_monotone_in_beta_and_group_size() {
        for m in [1usize, 3, 5, 7, 9, 21] {
            let mut prev = 1.0f64;
            for b in 0..10 {
                let beta = b as f64 * 0.05;
                let p = group_reliability(&FilterParams { m, beta }).unwrap();
                assert!(p <= prev + 1e-12, "m={m} beta={beta}");
                prev = p;
            }
        }
        for b in 1..10 {
            let beta = b as f64 * 0.05;
            let mut prev = 0.0f64;
            for m in [1usize, 3, 5, 7, 9, 11] {
                let p = group_reliability(&FilterParams { m, beta }).unwrap();
                assert!(p >= prev - 1e-12, "m={m} beta={beta}");
                prev = p;
            }
        }
    }

    #[test]
    fn min_group_size_examples() {
        assert_eq!(min_group_size(0.2, 0.94, DEFAULT_GROUP_SIZE_CAP), Ok(5));
        assert_eq!(min_group_size(0.0, 1.0, DEFAULT_GROUP_SIZE_CAP), Ok(1));
        assert_eq!(
            min_group_size(0.5, 0.9, DEFAULT_GROUP_SIZE_CAP),
            Err(FilterError::Infeasible)
        );
        assert_eq!(
            min_group_size(0.49, 0.9999, 9),
            Err(FilterError::CapExceeded { cap: 9 })
        );
    }

    #[test]
    fn pairs_at_threshold_kept_and_below_dropped() {
        let file = FileId::of_name("f");
        let (_, dl, vid) = make_version(file, 4, 1).unwrap();
        let provider = id_of("p-1");
        let honest = record_with(vid, Some(dl), &[provider], &[]);

        // Present at 3 of 5 maintainers: kept.
        let responses = responses_from(vec![
            vec![honest.clone()],
            vec![honest.clone()],
            vec![honest.clone()],
            vec![],
            vec![],
        ]);
        let kept = majority_filter(&responses, 5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].provider_ids, vec![provider]);

        // Present at 2 of 5: dropped.
        let responses = responses_from(vec![
            vec![honest.clone()],
            vec![honest],
            vec![],
            vec![],
            vec![],
        ]);
        assert!(majority_filter(&responses, 5).is_empty());
    }

    #[test]
    fn colluding_minority_fabrication_is_dropped_for_every_pattern() {
        let file = FileId::of_name("f");
        let (_, dl, vid) = make_version(file, 4, 1).unwrap();
        let (_, fake_dl, fake_vid) = make_version(file, 4, 2).unwrap();
        let honest = record_with(vid, Some(dl), &[id_of("p-1")], &[id_of("o-1")]);
        let fabricated = record_with(fake_vid, Some(fake_dl), &[id_of("p-666")], &[]);

        // All 2^5 malicious/honest patterns: malicious maintainers drop the
        // honest record and serve the same fabricated one.
        for pattern in 0u32..32 {
            let malicious_count = pattern.count_ones() as usize;
            let responses = responses_from(
                (0..5)
                    .map(|i| {
                        if pattern & (1 << i) != 0 {
                            vec![fabricated.clone()]
                        } else {
                            vec![honest.clone()]
                        }
                    })
                    .collect(),
            );
            let kept = majority_filter(&responses, 5);
            if malicious_count <= 2 {
                assert_eq!(kept.len(), 1, "pattern {pattern:b}");
                assert_eq!(kept[0].version_id, vid);
                assert_eq!(kept[0].provider_ids, vec![id_of("p-1")]);
                assert_eq!(kept[0].voter_ids, vec![id_of("o-1")]);
            } else {
                assert!(
                    kept.iter().all(|r| r.version_id != vid),
                    "pattern {pattern:b}"
                );
            }
        }
    }

    #[test]
    fn inconsistent_digest_list_is_rejected_by_the_hash_check() {
        let file = FileId::of_name("f");
        let (_, dl, vid) = make_version(file, 4, 1).unwrap();
        let (_, wrong_dl, _) = make_version(file, 4, 9).unwrap();
        // Three maintainers report the true binding, two report a corrupted
        // digest list under the same version id.
        let honest = record_with(vid, Some(dl.clone()), &[id_of("p-1")], &[]);
        let corrupted = record_with(vid, Some(wrong_dl), &[id_of("p-1")], &[]);
        let responses = responses_from(vec![
            vec![honest.clone()],
            vec![honest.clone()],
            vec![honest],
            vec![corrupted.clone()],
            vec![corrupted],
        ]);
        let kept = majority_filter(&responses, 5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].digest_list.as_ref().unwrap(), &dl);
    }

    #[test]
    fn unrecoverable_digest_list_drops_the_record() {
        let file = FileId::of_name("f");
        let (_, dl, vid) = make_version(file, 4, 1).unwrap();
        let (_, wrong_dl, _) = make_version(file, 4, 9).unwrap();
        // The pair survives the tally, but every reported digest list is
        // inconsistent, so the record cannot be used.
        let corrupted = record_with(vid, Some(wrong_dl), &[id_of("p-1")], &[]);
        let responses = responses_from(vec![vec![corrupted.clone()]; 5]);
        assert!(majority_filter(&responses, 5).is_empty());
        // Sanity: with a valid digest list the same tally is kept.
        let honest = record_with(vid, Some(dl), &[id_of("p-1")], &[]);
        let responses = responses_from(vec![vec![honest]; 5]);
        assert_eq!(majority_filter(&responses, 5).len(), 1);
    }

    #[test]
    fn zero_malicious_filter_reproduces_ground_truth() {
        let file = FileId::of_name("f");
        let (_, dl_a, vid_a) = make_version(file, 4, 1).unwrap();
        let (_, dl_b, vid_b) = make_version(file, 4, 2).unwrap();
        let a = record_with(
            vid_a,
            Some(dl_a),
            &[id_of("p-1"), id_of("p-2")],
            &[id_of("o-1")],
        );
        let b = record_with(vid_b, Some(dl_b), &[id_of("p-3")], &[]);
        let truth = {
            let mut t = vec![a.clone(), b.clone()];
            t.sort_by_key(|r| r.version_id);
            t
        };
        let responses = responses_from(vec![vec![a.clone(), b.clone()]; 5]);
        let kept = majority_filter(&responses, 5);
        assert_eq!(kept, truth);
    }

    /// Negative control: a filter that collapses duplicates before
    /// counting (so every pair tallies once) cannot separate fabricated
    /// pairs from honest ones.
    #[test]
    fn removing_duplicate_counting_breaks_soundness() {
        fn dedup_filter(responses: &[MaintainerResponse]) -> BTreeSet<(VersionId, NodeId)> {
            let mut pairs = BTreeSet::new();
            for response in responses {
                for record in &response.records {
                    for &p in &record.provider_ids {
                        pairs.insert((record.version_id, p));
                    }
                }
            }
            pairs
        }

        let file = FileId::of_name("f");
        let (_, dl, vid) = make_version(file, 4, 1).unwrap();
        let (_, fake_dl, fake_vid) = make_version(file, 4, 2).unwrap();
        let honest = record_with(vid, Some(dl), &[id_of("p-1")], &[]);
        let fabricated = record_with(fake_vid, Some(fake_dl), &[id_of("p-666")], &[]);
        let responses = responses_from(vec![
            vec![honest.clone()],
            vec![honest.clone()],
            vec![honest.clone()],
            vec![honest.clone()],
            vec![fabricated],
        ]);

        // The duplicate-counting filter rejects the single fabricated pair.
        let kept = majority_filter(&responses, 5);
        assert!(kept.iter().all(|r| r.version_id != fake_vid));
        // Without multiplicities the fabricated pair is indistinguishable.
        let pairs = dedup_filter(&responses);
        assert!(pairs.contains(&(fake_vid, id_of("p-666"))));
    }

    #[test]
    fn tallies_report_per_maintainer_counts() {
        let file = FileId::of_name("f");
        let (_, dl, vid) = make_version(file, 4, 1).unwrap();
        let honest = record_with(vid, Some(dl), &[id_of("p-1")], &[]);
        let responses = responses_from(vec![
            vec![honest.clone()],
            vec![honest.clone()],
            vec![honest],
            vec![],
            vec![],
        ]);
        let tallies = tally_provider_pairs(&responses);
        assert_eq!(tallies.len(), 1);
        assert_eq!(tallies[0].count, 3);
    }
}
