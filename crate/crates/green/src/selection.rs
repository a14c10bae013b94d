//! Probabilistic version selection, biased towards availability (provider
//! count) and reputation.

use crate::content::VersionId;
use rand::Rng;
use thiserror::Error;

/// One selectable version: its provider count and reputation score.
/// The score is shifted by +1 into [0, 2] so selection weights stay
/// non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub version_id: VersionId,
    pub provider_count: usize,
    pub rep: f64,
}

impl Candidate {
    pub fn rep_shifted(&self) -> f64 {
        self.rep + 1.0
    }

    /// Selection weight `|PIL| * (rep + 1)`. Versions without providers
    /// weigh nothing; they cannot be downloaded.
    pub fn weight(&self) -> f64 {
        if self.provider_count == 0 {
            0.0
        } else {
            self.provider_count as f64 * self.rep_shifted()
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectionError {
    #[error("candidate list must not be empty")]
    NoCandidates,
    #[error("no candidate has any provider")]
    NoProviders,
}

/// Selection weights, in candidate order.
pub fn selection_weights(candidates: &[Candidate]) -> Vec<f64> {
    candidates.iter().map(Candidate::weight).collect()
}

/// Normalized selection probabilities; `None` when the total weight is
/// zero (the ad hoc regime).
pub fn selection_probabilities(candidates: &[Candidate]) -> Option<Vec<f64>> {
    let weights = selection_weights(candidates);
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        Some(weights.into_iter().map(|w| w / total).collect())
    } else {
        None
    }
}

fn sample_weighted(
    candidates: &[Candidate],
    weights: &[f64],
    rng: &mut impl Rng,
) -> Result<VersionId, SelectionError> {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        // One draw against the cumulative weight vector.
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (candidate, &w) in candidates.iter().zip(weights) {
            acc += w;
            if target < acc {
                return Ok(candidate.version_id);
            }
        }
        // Only reachable through floating-point shortfall at the top end.
        return Ok(candidates
            .iter()
            .zip(weights)
            .rev()
            .find(|(_, &w)| w > 0.0)
            .map(|(c, _)| c.version_id)
            .expect("positive total implies a positive weight"));
    }
    // All weights zero (every reputation at -1): ad hoc uniform selection
    // among candidates that still have providers.
    let with_providers: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| c.provider_count > 0)
        .collect();
    if with_providers.is_empty() {
        return Err(SelectionError::NoProviders);
    }
    let pick = rng.random_range(0..with_providers.len());
    Ok(with_providers[pick].version_id)
}

/// Samples a version with probability proportional to
/// `|PIL| * (rep + 1)`; falls back to a uniform ad hoc pick when every
/// weight is zero.
pub fn select_version(
    candidates: &[Candidate],
    rng: &mut impl Rng,
) -> Result<VersionId, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let weights = selection_weights(candidates);
    sample_weighted(candidates, &weights, rng)
}

/// Baseline comparison strategy: proportional to provider count only.
pub fn select_baseline(
    candidates: &[Candidate],
    rng: &mut impl Rng,
) -> Result<VersionId, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let weights: Vec<f64> = candidates
        .iter()
        .map(|c| c.provider_count as f64)
        .collect();
    sample_weighted(candidates, &weights, rng)
}
