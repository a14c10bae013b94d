//! Download simulation with realtime block-digest verification and the
//! probabilistic verification planner.
//!
//! The planner answers: assuming at least `r` of `b` blocks of a polluted
//! copy are corrupted, how many randomly chosen blocks must be verified so
//! that the chance of missing every corrupted one stays at or below the
//! expected false positive rate? Verified positions are sampled uniformly
//! without replacement, which is what gives the miss rate its
//! hypergeometric form `C(b-r, v) / C(b, v)`.

use crate::content::{VersionId, VersionInstance};
use crate::overlay::NodeId;
use rand::seq::index;
use rand::Rng;
use std::collections::BTreeSet;
use thiserror::Error;

/// Expected rates are usually quoted to three decimals, so a computed rate
/// inside the rounding interval of the requested one still satisfies it.
/// Ignored when the requested rate is exactly zero: zero means zero.
pub const EFPR_ROUNDING_SLACK: f64 = 5e-4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerificationError {
    #[error("a version needs at least one block")]
    ZeroBlocks,
    #[error("assumed polluted blocks ({r}) cannot exceed block count ({b})")]
    PollutedExceedsBlocks { r: u32, b: u32 },
    #[error("expected false positive rate must lie in [0, 1]")]
    InvalidRate,
    #[error("provider list must not be empty")]
    NoProviders,
    #[error("plan is for {plan} blocks but the version has {version}")]
    BlockCountMismatch { plan: u32, version: u32 },
}

/// Probability that verifying `v` uniformly chosen blocks out of `b`
/// misses all of at least `r` corrupted ones: `C(b-r, v) / C(b, v)` when
/// `r + v <= b`, zero otherwise.
pub fn false_positive_rate(b: u32, r: u32, v: u32) -> f64 {
    debug_assert!(r <= b && v <= b);
    if r == 0 {
        return 1.0;
    }
    if r + v > b {
        return 0.0;
    }
    // C(b-r, v) / C(b, v) telescopes to a product of r factors, each a
    // ratio of small integers, so it stays exact to the last few ulps even
    // for block counts in the tens of thousands.
    let mut rate = 1.0f64;
    for j in 0..r {
        rate *= (b - v - j) as f64 / (b - j) as f64;
    }
    rate
}

/// A verification plan: verify `v_min` uniformly chosen blocks of `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationPlan {
    pub block_count: u32,
    pub polluted_min: u32,
    pub efpr: f64,
    pub v_min: u32,
    pub achieved_fpr: f64,
}

/// Picks the smallest number of verified blocks whose false positive rate
/// meets `efpr`.
///
/// `efpr >= 1` asks for no assurance: verify nothing. `efpr == 0` demands
/// certainty: verify `b - r + 1` blocks when `r >= 1` (any corrupted set
/// of size `r` then intersects the verified set), or all `b` when
/// `r == 0` leaves nothing to promise.
pub fn plan_verification(b: u32, r: u32, efpr: f64) -> Result<VerificationPlan, VerificationError> {
    if b == 0 {
        return Err(VerificationError::ZeroBlocks);
    }
    if r > b {
        return Err(VerificationError::PollutedExceedsBlocks { r, b });
    }
    if !(0.0..=1.0).contains(&efpr) || efpr.is_nan() {
        return Err(VerificationError::InvalidRate);
    }
    let v_min = if efpr >= 1.0 {
        0
    } else if efpr == 0.0 {
        if r == 0 {
            b
        } else {
            b - r + 1
        }
    } else {
        (0..=b)
            .find(|&v| false_positive_rate(b, r, v) <= efpr + EFPR_ROUNDING_SLACK)
            .unwrap_or(b)
    };
    Ok(VerificationPlan {
        block_count: b,
        polluted_min: r,
        efpr,
        v_min,
        achieved_fpr: false_positive_rate(b, r, v_min),
    })
}

/// Result of downloading one version.
#[derive(Debug, Clone, PartialEq)]
pub struct DownloadOutcome {
    pub version_id: VersionId,
    pub accepted: bool,
    pub detected_pollution: bool,
    pub blocks_verified: u32,
    /// Block positions of the assembled copy that are corrupted, whether
    /// or not verification looked at them.
    pub received_corrupted: Vec<u16>,
}

impl DownloadOutcome {
    /// Whether the assembled copy itself is polluted content, counting
    /// both corrupted blocks and decoy versions (which are junk even
    /// though every block matches their own digest list).
    pub fn polluted(&self, version_authentic: bool) -> bool {
        !version_authentic || !self.received_corrupted.is_empty()
    }
}

/// Simulates downloading `version` from `providers` under `plan`.
///
/// Blocks are assigned round-robin over a randomly ordered provider list
/// (the parallel download model), then `v_min` uniformly chosen positions
/// are verified against the digest list. A verified position whose serving
/// provider corrupts it is a mismatch: the download is rejected. Rejection
/// is an outcome, not an error.
pub fn download(
    version: &VersionInstance,
    providers: &[NodeId],
    plan: &VerificationPlan,
    rng: &mut impl Rng,
) -> Result<DownloadOutcome, VerificationError> {
    if providers.is_empty() {
        return Err(VerificationError::NoProviders);
    }
    if plan.block_count != version.block_count {
        return Err(VerificationError::BlockCountMismatch {
            plan: plan.block_count,
            version: version.block_count,
        });
    }
    let b = version.block_count;

    // Blocks are assigned round-robin over a random provider order, so at
    // most the first `b` providers of the order ever serve. Sampling just
    // those is equivalent and avoids permuting a large provider list.
    let serving_count = providers.len().min(b as usize);
    let order: Vec<NodeId> = index::sample(rng, providers.len(), serving_count)
        .into_iter()
        .map(|i| providers[i])
        .collect();

    // Corrupted positions of the assembled copy: block i comes from
    // order[i mod n] and is corrupt when that provider's copy corrupts it.
    let mut received_corrupted: Vec<u16> = Vec::new();
    if !version.per_provider_corruption.is_empty() {
        let n = order.len();
        for i in 0..b {
            let provider = &order[(i as usize) % n];
            if let Some(corrupted) = version.corrupted_blocks_of(provider) {
                if corrupted.contains(&(i as u16)) {
                    received_corrupted.push(i as u16);
                }
            }
        }
    }

    let v = plan.v_min.min(b);
    let detected = if v == 0 || received_corrupted.is_empty() {
        // Nothing verified, or nothing corrupt to find. Decoy blocks match
        // the decoy's own digest list, so they cannot mismatch here.
        false
    } else {
        let corrupted: BTreeSet<u16> = received_corrupted.iter().copied().collect();
        index::sample(rng, b as usize, v as usize)
            .into_iter()
            .any(|pos| corrupted.contains(&(pos as u16)))
    };

    Ok(DownloadOutcome {
        version_id: version.version_id,
        accepted: !detected,
        detected_pollution: detected,
        blocks_verified: v,
        received_corrupted,
    })
}
