//! Identifier circle: 160-bit identifiers, successor resolution and
//! redundant maintainer-group assignment.
//!
//! The overlay is resolved by direct lookup over a sorted identifier set.
//! There are no finger tables and no routing hops; everything interesting
//! in this system lives above the routing layer.

use sha2::{Digest, Sha256};
use std::fmt;
use thiserror::Error;

/// Width of an identifier on the circle, in bytes (160 bits).
pub const ID_BYTES: usize = 20;

/// Separator between a group subject and the maintainer index in the
/// hash input, e.g. `"file-0001" | 3`.
pub const SUBJECT_SEPARATOR: u8 = 0x7c;

/// A point on the identifier circle. Identifies users; the same value
/// space is reused for file and version identifiers.
///
/// Ordering is the natural big-endian integer order; circular distance
/// and successor relations are derived from it by wrapping.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId([u8; ID_BYTES]);

impl NodeId {
    pub fn from_bytes(bytes: [u8; ID_BYTES]) -> Self {
        NodeId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; ID_BYTES] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(ID_BYTES * 2);
        for b in self.0 {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    pub fn from_hex(hex: &str) -> Option<Self> {
        if hex.len() != ID_BYTES * 2 {
            return None;
        }
        let mut bytes = [0u8; ID_BYTES];
        for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
            let s = std::str::from_utf8(chunk).ok()?;
            bytes[i] = u8::from_str_radix(s, 16).ok()?;
        }
        Some(NodeId(bytes))
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", self.to_hex())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Short prefix is enough to tell ids apart in logs.
        write!(f, "{}", &self.to_hex()[..8])
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OverlayError {
    #[error("hash source must not be empty")]
    EmptySource,
    #[error("population must not be empty")]
    EmptyPopulation,
    #[error("maintainer group size must be at least 1")]
    ZeroGroupSize,
}

/// Hashes an arbitrary byte string onto the identifier circle.
///
/// Deterministic, and uniformly distributed over the circle for distinct
/// inputs. Any fixed 160-bit cryptographic hash works here; we truncate
/// SHA-256, which has the same interface and better margins than SHA-1.
pub fn hash_to_id(source: &[u8]) -> Result<NodeId, OverlayError> {
    if source.is_empty() {
        return Err(OverlayError::EmptySource);
    }
    let digest = Sha256::digest(source);
    let mut bytes = [0u8; ID_BYTES];
    bytes.copy_from_slice(&digest[..ID_BYTES]);
    Ok(NodeId(bytes))
}

/// Convenience wrapper for the common case of hashing a name.
pub fn id_of(name: &str) -> NodeId {
    hash_to_id(name.as_bytes()).expect("name must not be empty")
}

/// An immutable snapshot of the participating identifiers, sorted so
/// successor queries are a binary search.
#[derive(Debug, Clone, Default)]
pub struct Population {
    ids: Vec<NodeId>,
}

impl Population {
    pub fn new(ids: impl IntoIterator<Item = NodeId>) -> Self {
        let mut ids: Vec<NodeId> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        Population { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids.iter().copied()
    }

    /// First member whose identifier is equal to or follows `id` on the
    /// circle, wrapping past the top of the space to the smallest member.
    pub fn successor(&self, id: NodeId) -> Result<NodeId, OverlayError> {
        if self.ids.is_empty() {
            return Err(OverlayError::EmptyPopulation);
        }
        let idx = self.ids.partition_point(|m| *m < id);
        Ok(if idx == self.ids.len() {
            self.ids[0]
        } else {
            self.ids[idx]
        })
    }
}

/// The redundant group of nodes responsible for one subject (a file name
/// or a user identifier string).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaintainerGroup {
    pub subject: String,
    pub members: Vec<NodeId>,
}

impl MaintainerGroup {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Hash input for the `i`-th maintainer of `subject`: the subject bytes,
/// one separator byte, then the decimal rendering of `i` (1-based).
fn group_hash_input(subject: &str, index: usize) -> Vec<u8> {
    let digits = index.to_string();
    let mut input = Vec::with_capacity(subject.len() + 1 + digits.len());
    input.extend_from_slice(subject.as_bytes());
    input.push(SUBJECT_SEPARATOR);
    input.extend_from_slice(digits.as_bytes());
    input
}

/// Resolves the `m` maintainers of `subject` over `population`.
///
/// Member `i` (1-based) is `successor(hash(subject | i))`. Duplicate
/// members are possible when the population is small; that is fine, the
/// group is positional.
pub fn maintainer_group(
    subject: &str,
    m: usize,
    population: &Population,
) -> Result<MaintainerGroup, OverlayError> {
    if m == 0 {
        return Err(OverlayError::ZeroGroupSize);
    }
    if population.is_empty() {
        return Err(OverlayError::EmptyPopulation);
    }
    let mut members = Vec::with_capacity(m);
    for i in 1..=m {
        let id = hash_to_id(&group_hash_input(subject, i))?;
        members.push(population.successor(id)?);
    }
    Ok(MaintainerGroup {
        subject: subject.to_owned(),
        members,
    })
}
