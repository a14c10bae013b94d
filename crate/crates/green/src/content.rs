//! Ground-truth content model (files, versions, blocks, digests) and the
//! publication protocol that installs index records at maintainer groups.
//!
//! Blocks carry no real bytes. Each version is represented by a content
//! seed from which block digests are derived, so integrity checks and
//! corruption flags are computable without storing payloads.

use crate::overlay::{self, maintainer_group, NodeId, OverlayError, Population, ID_BYTES};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// Identifier of a file, derived by hashing the file name.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FileId(pub NodeId);

impl FileId {
    pub fn of_name(name: &str) -> Self {
        FileId(overlay::id_of(name))
    }
}

impl fmt::Debug for FileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FileId({})", self.0.to_hex())
    }
}

/// Digest of one data block.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockDigest(pub [u8; ID_BYTES]);

impl fmt::Debug for BlockDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockDigest({:02x}{:02x}..)", self.0[0], self.0[1])
    }
}

/// Identifier of a version: the hash of its entire digest list.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VersionId(pub [u8; ID_BYTES]);

impl VersionId {
    pub fn to_hex(&self) -> String {
        NodeId::from_bytes(self.0).to_hex()
    }

    pub fn from_hex(hex: &str) -> Option<Self> {
        NodeId::from_hex(hex).map(|id| VersionId(*id.as_bytes()))
    }
}

impl fmt::Debug for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VersionId({})", self.to_hex())
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..8])
    }
}

/// Ordered list of block digests for one version.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DigestList(Vec<BlockDigest>);

impl DigestList {
    pub fn new(digests: Vec<BlockDigest>) -> Self {
        DigestList(digests)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn digests(&self) -> &[BlockDigest] {
        &self.0
    }

    /// Hash of the concatenated digest list; this is the version identifier.
    pub fn version_id(&self) -> VersionId {
        let mut hasher = Sha256::new();
        for d in &self.0 {
            hasher.update(d.0);
        }
        let digest = hasher.finalize();
        let mut bytes = [0u8; ID_BYTES];
        bytes.copy_from_slice(&digest[..ID_BYTES]);
        VersionId(bytes)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContentError {
    #[error("a version needs at least one block")]
    ZeroBlocks,
    #[error(transparent)]
    Overlay(#[from] OverlayError),
}

/// Ground-truth state of one concrete version.
///
/// `authentic` holds exactly when `polluted_block_min == 0` and every
/// per-provider corruption set is empty. Decoys are fresh versions with
/// `polluted_block_min == block_count`: all of their content differs from
/// any authentic version, but each copy is internally consistent with its
/// own digest list, so block verification has nothing to catch. Identifier
/// corruption instead leaves the version identifier alone and corrupts
/// blocks per provider copy; those are the sets recorded here.
#[derive(Clone, Debug)]
pub struct VersionInstance {
    pub file: FileId,
    pub version_id: VersionId,
    pub authentic: bool,
    pub block_count: u32,
    pub polluted_block_min: u32,
    pub content_seed: u64,
    pub per_provider_corruption: BTreeMap<NodeId, BTreeSet<u16>>,
}

impl VersionInstance {
    /// Marks a freshly made version as a decoy.
    pub fn into_decoy(mut self) -> Self {
        self.authentic = false;
        self.polluted_block_min = self.block_count;
        self
    }

    /// Registers an identifier-corruption copy: `provider` shares this
    /// version with the given corrupted block indices.
    pub fn corrupt_copy(&mut self, provider: NodeId, corrupted: BTreeSet<u16>) {
        debug_assert!(!corrupted.is_empty());
        debug_assert!(corrupted.iter().all(|&i| (i as u32) < self.block_count));
        self.authentic = false;
        if self.polluted_block_min == 0 {
            self.polluted_block_min = corrupted.len() as u32;
        } else {
            self.polluted_block_min = self.polluted_block_min.min(corrupted.len() as u32);
        }
        self.per_provider_corruption.insert(provider, corrupted);
    }

    pub fn corrupted_blocks_of(&self, provider: &NodeId) -> Option<&BTreeSet<u16>> {
        self.per_provider_corruption.get(provider)
    }
}

fn block_digest(file: FileId, content_seed: u64, index: u32) -> BlockDigest {
    let mut hasher = Sha256::new();
    hasher.update(file.0.as_bytes());
    hasher.update(content_seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; ID_BYTES];
    bytes.copy_from_slice(&digest[..ID_BYTES]);
    BlockDigest(bytes)
}

/// Creates a version of `file` with `block_count` blocks derived from
/// `content_seed`. Deterministic per `(file, block_count, content_seed)`.
pub fn make_version(
    file: FileId,
    block_count: u32,
    content_seed: u64,
) -> Result<(VersionInstance, DigestList, VersionId), ContentError> {
    if block_count == 0 {
        return Err(ContentError::ZeroBlocks);
    }
    let digests: Vec<BlockDigest> = (0..block_count)
        .map(|i| block_digest(file, content_seed, i))
        .collect();
    let digest_list = DigestList::new(digests);
    let version_id = digest_list.version_id();
    let instance = VersionInstance {
        file,
        version_id,
        authentic: true,
        block_count,
        polluted_block_min: 0,
        content_seed,
        per_provider_corruption: BTreeMap::new(),
    };
    Ok((instance, digest_list, version_id))
}

/// One row of a maintainer's index table for a file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileInfoRecord {
    pub version_id: VersionId,
    /// Absent when the record was created by a vote pointer for a version
    /// the maintainer has not seen published yet.
    pub digest_list: Option<DigestList>,
    /// Provider identifier list, sorted, one entry per provider.
    pub provider_ids: Vec<NodeId>,
    /// Voter identifier list, sorted, one entry per voter.
    pub voter_ids: Vec<NodeId>,
}

impl FileInfoRecord {
    pub fn new(version_id: VersionId, digest_list: Option<DigestList>) -> Self {
        FileInfoRecord {
            version_id,
            digest_list,
            provider_ids: Vec::new(),
            voter_ids: Vec::new(),
        }
    }

    /// Inserts a provider; returns true when it was not already listed.
    pub fn add_provider(&mut self, id: NodeId) -> bool {
        match self.provider_ids.binary_search(&id) {
            Ok(_) => false,
            Err(pos) => {
                self.provider_ids.insert(pos, id);
                true
            }
        }
    }

    pub fn remove_provider(&mut self, id: &NodeId) -> bool {
        match self.provider_ids.binary_search(id) {
            Ok(pos) => {
                self.provider_ids.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    /// Inserts a voter; returns true when it was not already listed.
    pub fn add_voter(&mut self, id: NodeId) -> bool {
        match self.voter_ids.binary_search(&id) {
            Ok(_) => false,
            Err(pos) => {
                self.voter_ids.insert(pos, id);
                true
            }
        }
    }

    /// The requestor-side consistency check: hashing the digest list must
    /// reproduce the version identifier.
    pub fn digest_list_consistent(&self) -> bool {
        match &self.digest_list {
            Some(dl) => dl.version_id() == self.version_id,
            None => false,
        }
    }
}

/// Index table of one file at one maintainer, keyed by version identifier.
pub type FileTable = BTreeMap<VersionId, FileInfoRecord>;

/// Response of one maintainer to a file query. An offline maintainer
/// contributes an entry with no records.
#[derive(Clone, Debug)]
pub struct MaintainerResponse {
    pub maintainer: NodeId,
    pub records: Vec<FileInfoRecord>,
}

/// Per-maintainer index storage, as used by the protocol-level tests and
/// the adversarial filtering scenarios. The experiment harness keeps a
/// single canonical table per file instead, which is equivalent while all
/// maintainers are honest (they receive identical writes).
#[derive(Debug, Default)]
pub struct MaintainerStore {
    tables: BTreeMap<NodeId, BTreeMap<FileId, FileTable>>,
}

impl MaintainerStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn table(&self, maintainer: NodeId, file: FileId) -> Option<&FileTable> {
        self.tables.get(&maintainer).and_then(|t| t.get(&file))
    }

    pub fn table_mut(&mut self, maintainer: NodeId, file: FileId) -> &mut FileTable {
        self.tables
            .entry(maintainer)
            .or_default()
            .entry(file)
            .or_default()
    }

    /// Publishes a version of `file_name` on behalf of `provider`: every
    /// maintainer of the file records the provider in the version's
    /// provider list. Re-publication is a no-op.
    pub fn publish(
        &mut self,
        provider: NodeId,
        file_name: &str,
        version_id: VersionId,
        digest_list: &DigestList,
        m: usize,
        population: &Population,
    ) -> Result<(), ContentError> {
        let group = maintainer_group(file_name, m, population)?;
        let file = FileId::of_name(file_name);
        for maintainer in group.members {
            let record = self
                .table_mut(maintainer, file)
                .entry(version_id)
                .or_insert_with(|| FileInfoRecord::new(version_id, None));
            if record.digest_list.is_none() {
                record.digest_list = Some(digest_list.clone());
            }
            record.add_provider(provider);
        }
        Ok(())
    }

    /// Records that `voter` has voted on a version of `file_name`. When
    /// the version is unknown at a maintainer the record is created with
    /// an empty provider list so the pointer is never lost.
    pub fn register_vote_pointer(
        &mut self,
        voter: NodeId,
        file_name: &str,
        version_id: VersionId,
        m: usize,
        population: &Population,
    ) -> Result<(), ContentError> {
        let group = maintainer_group(file_name, m, population)?;
        let file = FileId::of_name(file_name);
        for maintainer in group.members {
            let record = self
                .table_mut(maintainer, file)
                .entry(version_id)
                .or_insert_with(|| FileInfoRecord::new(version_id, None));
            record.add_voter(voter);
        }
        Ok(())
    }

    /// Queries the `m` maintainers of `file_name` and returns each
    /// maintainer's full response. Maintainers in `offline` answer with an
    /// empty record list. `hook` sees each maintainer's honest records and
    /// may corrupt them; honest maintainers use the identity hook.
    pub fn query_file_with<F>(
        &self,
        file_name: &str,
        m: usize,
        population: &Population,
        offline: &BTreeSet<NodeId>,
        mut hook: F,
    ) -> Result<Vec<MaintainerResponse>, ContentError>
    where
        F: FnMut(NodeId, Vec<FileInfoRecord>) -> Vec<FileInfoRecord>,
    {
        let group = maintainer_group(file_name, m, population)?;
        let file = FileId::of_name(file_name);
        let mut responses = Vec::with_capacity(m);
        for maintainer in group.members {
            let records: Vec<FileInfoRecord> = if offline.contains(&maintainer) {
                Vec::new()
            } else {
                self.table(maintainer, file)
                    .map(|t| t.values().cloned().collect())
                    .unwrap_or_default()
            };
            let records = hook(maintainer, records);
            responses.push(MaintainerResponse {
                maintainer,
                records,
            });
        }
        Ok(responses)
    }

    /// Queries with all maintainers honest and online.
    pub fn query_file(
        &self,
        file_name: &str,
        m: usize,
        population: &Population,
    ) -> Result<Vec<MaintainerResponse>, ContentError> {
        self.query_file_with(file_name, m, population, &BTreeSet::new(), |_, r| r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::id_of;

    fn population(n: u32) -> Population {
        Population::new((0..n).map(|i| id_of(&format!("user-{i}"))))
    }

    #[test]
    fn make_version_is_deterministic() {
        let file = FileId::of_name("file-0001");
        let (_, dl_a, vid_a) = make_version(file, 8, 42).unwrap();
        let (_, dl_b, vid_b) = make_version(file, 8, 42).unwrap();
        assert_eq!(vid_a, vid_b);
        assert_eq!(dl_a, dl_b);
    }

    #[test]
    fn single_block_version() {
        let file = FileId::of_name("file-0001");
        let (_, dl, vid) = make_version(file, 1, 0).unwrap();
        assert_eq!(dl.len(), 1);
        assert_eq!(dl.version_id(), vid);
    }

    #[test]
    fn zero_blocks_rejected() {
        let file = FileId::of_name("file-0001");
        assert_eq!(
            make_version(file, 0, 0).unwrap_err(),
            ContentError::ZeroBlocks
        );
    }

    #[test]
    fn content_seed_changes_the_version_id() {
        let file = FileId::of_name("file-0001");
        let (_, dl_a, vid_a) = make_version(file, 8, 1).unwrap();
        let (_, dl_b, vid_b) = make_version(file, 8, 2).unwrap();
        assert_ne!(vid_a, vid_b);
        assert!(dl_a
            .digests()
            .iter()
            .zip(dl_b.digests())
            .any(|(a, b)| a != b));
    }

    #[test]
    fn publish_is_idempotent() {
        let pop = population(32);
        let provider = id_of("user-3");
        let file = FileId::of_name("file-0001");
        let (_, dl, vid) = make_version(file, 4, 7).unwrap();
        let mut store = MaintainerStore::new();
        store
            .publish(provider, "file-0001", vid, &dl, 5, &pop)
            .unwrap();
        store
            .publish(provider, "file-0001", vid, &dl, 5, &pop)
            .unwrap();

        for resp in store.query_file("file-0001", 5, &pop).unwrap() {
            assert_eq!(resp.records.len(), 1);
            assert_eq!(resp.records[0].provider_ids, vec![provider]);
        }
    }

    #[test]
    fn same_version_from_two_providers_shares_one_record() {
        let pop = population(32);
        let file = FileId::of_name("file-0001");
        let (_, dl, vid) = make_version(file, 4, 7).unwrap();
        let mut store = MaintainerStore::new();
        store
            .publish(id_of("user-1"), "file-0001", vid, &dl, 5, &pop)
            .unwrap();
        store
            .publish(id_of("user-2"), "file-0001", vid, &dl, 5, &pop)
            .unwrap();

        for resp in store.query_file("file-0001", 5, &pop).unwrap() {
            assert_eq!(resp.records.len(), 1);
            assert_eq!(resp.records[0].provider_ids.len(), 2);
        }
    }

    #[test]
    fn distinct_versions_get_distinct_rows() {
        let pop = population(32);
        let file = FileId::of_name("file-0001");
        let (_, dl_a, vid_a) = make_version(file, 4, 1).unwrap();
        let (_, dl_b, vid_b) = make_version(file, 4, 2).unwrap();
        let mut store = MaintainerStore::new();
        store
            .publish(id_of("user-1"), "file-0001", vid_a, &dl_a, 5, &pop)
            .unwrap();
        store
            .publish(id_of("user-2"), "file-0001", vid_b, &dl_b, 5, &pop)
            .unwrap();

        for resp in store.query_file("file-0001", 5, &pop).unwrap() {
            assert_eq!(resp.records.len(), 2);
            for record in &resp.records {
                assert!(record.digest_list_consistent());
            }
        }
    }

    #[test]
    fn vote_pointer_registration_is_idempotent_and_isolated() {
        let pop = population(32);
        let file = FileId::of_name("file-0001");
        let (_, dl_a, vid_a) = make_version(file, 4, 1).unwrap();
        let (_, _, vid_b) = make_version(file, 4, 2).unwrap();
        let mut store = MaintainerStore::new();
        store
            .publish(id_of("user-1"), "file-0001", vid_a, &dl_a, 5, &pop)
            .unwrap();

        let voter = id_of("user-9");
        store
            .register_vote_pointer(voter, "file-0001", vid_a, 5, &pop)
            .unwrap();
        store
            .register_vote_pointer(voter, "file-0001", vid_a, 5, &pop)
            .unwrap();
        // Vote on an unpublished version creates an empty-provider record.
        store
            .register_vote_pointer(voter, "file-0001", vid_b, 5, &pop)
            .unwrap();

        for resp in store.query_file("file-0001", 5, &pop).unwrap() {
            let a = resp
                .records
                .iter()
                .find(|r| r.version_id == vid_a)
                .unwrap();
            assert_eq!(a.voter_ids, vec![voter]);
            let b = resp
                .records
                .iter()
                .find(|r| r.version_id == vid_b)
                .unwrap();
            assert!(b.provider_ids.is_empty());
            assert_eq!(b.voter_ids, vec![voter]);
        }
    }

    #[test]
    fn every_honest_maintainer_sees_every_registered_voter() {
        let pop = population(64);
        let file = FileId::of_name("file-0002");
        let (_, dl, vid) = make_version(file, 4, 3).unwrap();
        let mut store = MaintainerStore::new();
        store
            .publish(id_of("user-0"), "file-0002", vid, &dl, 5, &pop)
            .unwrap();
        let voters: Vec<NodeId> = (10..17).map(|i| id_of(&format!("user-{i}"))).collect();
        for &voter in &voters {
            store
                .register_vote_pointer(voter, "file-0002", vid, 5, &pop)
                .unwrap();
        }
        for resp in store.query_file("file-0002", 5, &pop).unwrap() {
            assert_eq!(resp.records[0].voter_ids.len(), voters.len());
        }
    }

    #[test]
    fn offline_maintainer_yields_empty_entry() {
        let pop = population(32);
        let file = FileId::of_name("file-0001");
        let (_, dl, vid) = make_version(file, 4, 7).unwrap();
        let mut store = MaintainerStore::new();
        store
            .publish(id_of("user-1"), "file-0001", vid, &dl, 5, &pop)
            .unwrap();

        let group = maintainer_group("file-0001", 5, &pop).unwrap();
        let offline: BTreeSet<NodeId> = [group.members[2]].into();
        let responses = store
            .query_file_with("file-0001", 5, &pop, &offline, |_, r| r)
            .unwrap();
        let empty = responses.iter().filter(|r| r.records.is_empty()).count();
        // The offline node may appear at several group positions.
        let offline_positions = group
            .members
            .iter()
            .filter(|m| offline.contains(m))
            .count();
        assert_eq!(empty, offline_positions);
        assert_eq!(responses.len(), 5);
    }

    #[test]
    fn fabricated_records_appear_once_per_malicious_maintainer() {
        let pop = population(32);
        let file = FileId::of_name("file-0001");
        let (_, dl, vid) = make_version(file, 4, 7).unwrap();
        let (_, fake_dl, fake_vid) = make_version(file, 4, 99).unwrap();
        let mut store = MaintainerStore::new();
        store
            .publish(id_of("user-1"), "file-0001", vid, &dl, 5, &pop)
            .unwrap();

        let group = maintainer_group("file-0001", 5, &pop).unwrap();
        let malicious: BTreeSet<NodeId> = group.members[..2].iter().copied().collect();
        let mut fake = FileInfoRecord::new(fake_vid, Some(fake_dl));
        fake.add_provider(id_of("user-31"));

        let responses = store
            .query_file_with(
                "file-0001",
                5,
                &pop,
                &BTreeSet::new(),
                |maintainer, mut r| {
                    if malicious.contains(&maintainer) {
                        r.push(fake.clone());
                    }
                    r
                },
            )
            .unwrap();
        let fabricated = responses
            .iter()
            .flat_map(|r| &r.records)
            .filter(|r| r.version_id == fake_vid)
            .count();
        let malicious_positions = group
            .members
            .iter()
            .filter(|m| malicious.contains(m))
            .count();
        assert_eq!(fabricated, malicious_positions);
    }

    #[test]
    fn provider_entries_are_conserved_across_honest_maintainers() {
        let pop = population(64);
        let m = 5usize;
        let mut store = MaintainerStore::new();
        let file = FileId::of_name("file-0003");
        let mut publications = 0usize;
        for seed in 0..4u64 {
            let (_, dl, vid) = make_version(file, 4, seed).unwrap();
            for p in 0..3u32 {
                store
                    .publish(id_of(&format!("user-{p}")), "file-0003", vid, &dl, m, &pop)
                    .unwrap();
                publications += 1;
            }
        }
        let responses = store.query_file("file-0003", m, &pop).unwrap();
        let total_pil_entries: usize = responses
            .iter()
            .flat_map(|r| &r.records)
            .map(|r| r.provider_ids.len())
            .sum();
        assert_eq!(total_pil_entries, m * publications);
    }
}
