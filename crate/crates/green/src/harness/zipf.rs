//! Exact Zipf rank sampling over a finite range via the cumulative table.

use rand::Rng;

/// Samples ranks `0..n` with probability proportional to `1/(rank+1)^alpha`.
#[derive(Debug, Clone)]
pub struct ZipfSampler {
    cumulative: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(n: usize, alpha: f64) -> Self {
        assert!(n > 0, "zipf sampler needs at least one rank");
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0f64;
        for k in 1..=n {
            acc += 1.0 / (k as f64).powf(alpha);
            cumulative.push(acc);
        }
        let total = acc;
        for c in cumulative.iter_mut() {
            *c /= total;
        }
        // Guard the top end against floating shortfall.
        *cumulative.last_mut().expect("non-empty") = 1.0;
        ZipfSampler { cumulative }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Probability of one rank.
    pub fn probability(&self, rank: usize) -> f64 {
        let hi = self.cumulative[rank];
        let lo = if rank == 0 {
            0.0
        } else {
            self.cumulative[rank - 1]
        };
        hi - lo
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        self.cumulative.partition_point(|&c| c <= u)
    }
}
