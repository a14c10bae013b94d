//! Fenwick tree over integer weights, with prefix-sum sampling. Used to
//! draw versions proportionally to their provider counts in O(log n).

/// Binary indexed tree with a shadow array for point reads.
#[derive(Debug, Clone)]
pub struct Fenwick {
    tree: Vec<i64>,
    values: Vec<i64>,
    highest_bit: usize,
}

impl Fenwick {
    pub fn from_counts(counts: &[i64]) -> Self {
        let n = counts.len();
        let mut tree = vec![0i64; n + 1];
        for (i, &c) in counts.iter().enumerate() {
            tree[i + 1] += c;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                let add = tree[i + 1];
                tree[parent] += add;
            }
        }
        let mut highest_bit = 1usize;
        while highest_bit * 2 <= n {
            highest_bit *= 2;
        }
        Fenwick {
            tree,
            values: counts.to_vec(),
            highest_bit,
        }
    }

    pub fn value(&self, index: usize) -> i64 {
        self.values[index]
    }

    pub fn total(&self) -> i64 {
        self.prefix(self.values.len())
    }

    /// Sum of the first `count` weights.
    pub fn prefix(&self, count: usize) -> i64 {
        let mut sum = 0;
        let mut i = count;
        while i > 0 {
            sum += self.tree[i];
            i &= i - 1;
        }
        sum
    }

    pub fn add(&mut self, index: usize, delta: i64) {
        self.values[index] += delta;
        debug_assert!(self.values[index] >= 0);
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Smallest index whose cumulative weight exceeds `target`; requires
    /// `0 <= target < total()`.
    pub fn sample(&self, mut target: i64) -> usize {
        debug_assert!(target >= 0 && target < self.total());
        let mut pos = 0usize;
        let mut bit = self.highest_bit;
        while bit > 0 {
            let next = pos + bit;
            if next < self.tree.len() && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            bit >>= 1;
        }
        pos
    }
}
