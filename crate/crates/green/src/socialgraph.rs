//! Friend-graph ingestion from edge-list traces, genuine-group/polluter
//! labeling, and synthetic small-world generation for desk-scale runs.

use crate::overlay::{id_of, NodeId};
use rand::Rng;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Population label of one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Genuine { group: u32 },
    Polluter,
}

impl Label {
    pub fn is_genuine(self) -> bool {
        matches!(self, Label::Genuine { .. })
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("trace line {line}: expected two integer vertex ids, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("synthetic graph needs an even mean degree of at least 2, got {0}")]
    BadDegree(u32),
    #[error("synthetic graph needs at least degree + 1 users ({degree} vs {users})")]
    TooFewUsers { users: u32, degree: u32 },
    #[error("cannot place {target} genuine users in {groups} groups after {reseeds} reseeds")]
    LabelingStuck {
        target: usize,
        groups: u32,
        reseeds: u32,
    },
    #[error("genuine fraction must lie in [0, 1], got {0}")]
    BadGenuineFraction(f64),
}

/// Undirected friend graph with optional genuine/polluter labels.
/// Friendship is symmetric; self-loops are dropped on insertion.
#[derive(Debug, Clone, Default)]
pub struct SocialGraph {
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    labels: BTreeMap<NodeId, Label>,
}

impl SocialGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_user(&mut self, user: NodeId) {
        self.adjacency.entry(user).or_default();
    }

    /// Adds an undirected edge, ignoring self-loops and duplicates.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) {
        if a == b {
            return;
        }
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
    }

    pub fn user_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn users(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn friends(&self, user: &NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency
            .get(user)
            .into_iter()
            .flat_map(|s| s.iter().copied())
    }

    pub fn degree(&self, user: &NodeId) -> usize {
        self.adjacency.get(user).map_or(0, BTreeSet::len)
    }

    pub fn has_edge(&self, a: &NodeId, b: &NodeId) -> bool {
        self.adjacency.get(a).is_some_and(|s| s.contains(b))
    }

    pub fn label(&self, user: &NodeId) -> Option<Label> {
        self.labels.get(user).copied()
    }

    pub fn is_labeled(&self) -> bool {
        !self.labels.is_empty()
    }

    pub fn genuine_count(&self) -> usize {
        self.labels.values().filter(|l| l.is_genuine()).count()
    }

    pub fn polluter_count(&self) -> usize {
        self.labels
            .values()
            .filter(|l| matches!(l, Label::Polluter))
            .count()
    }

    /// Mean of the local clustering coefficients, counting isolated and
    /// degree-1 users as zero.
    pub fn clustering_coefficient(&self) -> f64 {
        if self.adjacency.is_empty() {
            return 0.0;
        }
        let mut total = 0.0f64;
        for neighbors in self.adjacency.values() {
            let k = neighbors.len();
            if k < 2 {
                continue;
            }
            let mut closed = 0usize;
            let list: Vec<&NodeId> = neighbors.iter().collect();
            for i in 0..list.len() {
                for j in (i + 1)..list.len() {
                    if self.has_edge(list[i], list[j]) {
                        closed += 1;
                    }
                }
            }
            total += closed as f64 / (k * (k - 1) / 2) as f64;
        }
        total / self.adjacency.len() as f64
    }

    pub fn stats(&self) -> GraphStats {
        let degrees: Vec<usize> = self.adjacency.values().map(BTreeSet::len).collect();
        let users = self.user_count();
        GraphStats {
            users,
            edges: self.edge_count(),
            avg_degree: if users == 0 {
                0.0
            } else {
                degrees.iter().sum::<usize>() as f64 / users as f64
            },
            min_degree: degrees.iter().copied().min().unwrap_or(0),
            max_degree: degrees.iter().copied().max().unwrap_or(0),
            genuine_users: self.genuine_count(),
            polluters: self.polluter_count(),
            genuine_groups: self
                .labels
                .values()
                .filter_map(|l| match l {
                    Label::Genuine { group } => Some(*group),
                    Label::Polluter => None,
                })
                .collect::<BTreeSet<u32>>()
                .len(),
        }
    }
}

/// Summary statistics for the graph-stats command.
#[derive(Debug, Clone, Serialize)]
pub struct GraphStats {
    pub users: usize,
    pub edges: usize,
    pub avg_degree: f64,
    pub min_degree: usize,
    pub max_degree: usize,
    pub genuine_users: usize,
    pub polluters: usize,
    pub genuine_groups: usize,
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} users, {} edges, mean degree {:.2}",
            self.users, self.edges, self.avg_degree
        )
    }
}

/// The identifier of trace vertex `v` (or synthetic user index `v`).
pub fn user_id(v: u64) -> NodeId {
    id_of(&format!("user-{v}"))
}

/// Loads an undirected graph from a whitespace-separated edge list,
/// one `u v` pair per line; `#` starts a comment. Duplicate edges
/// collapse and self-loops are dropped.
pub fn load_trace(path: &Path) -> Result<SocialGraph, GraphError> {
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut graph = SocialGraph::new();
    for (number, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (a, b) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(GraphError::Malformed {
                    line: number + 1,
                    text: raw.to_string(),
                })
            }
        };
        let parse = |s: &str| {
            s.parse::<u64>().map_err(|_| GraphError::Malformed {
                line: number + 1,
                text: raw.to_string(),
            })
        };
        let (a, b) = (parse(a)?, parse(b)?);
        let (a, b) = (user_id(a), user_id(b));
        graph.add_user(a);
        graph.add_user(b);
        graph.add_edge(a, b);
    }
    Ok(graph)
}

/// Rewiring probability of the small-world construction; enough to shrink
/// path lengths while keeping the clustering of the ring.
const REWIRE_PROB: f64 = 0.1;

/// Generates a Watts-Strogatz-style small-world graph over `n` users with
/// the requested (even) mean degree.
pub fn synth_graph(n: u32, avg_degree: u32, rng: &mut impl Rng) -> Result<SocialGraph, GraphError> {
    if avg_degree < 2 || avg_degree % 2 != 0 {
        return Err(GraphError::BadDegree(avg_degree));
    }
    if n <= avg_degree {
        return Err(GraphError::TooFewUsers {
            users: n,
            degree: avg_degree,
        });
    }
    let ids: Vec<NodeId> = (0..n as u64).map(user_id).collect();
    let mut graph = SocialGraph::new();
    for &id in &ids {
        graph.add_user(id);
    }
    let half = (avg_degree / 2) as u64;
    for i in 0..n as u64 {
        for j in 1..=half {
            let a = ids[i as usize];
            let neighbor = ((i + j) % n as u64) as usize;
            // Rewire the ring edge away from its natural endpoint with a
            // small probability.
            if rng.random_bool(REWIRE_PROB) {
                let mut tries = 0;
                loop {
                    let t = rng.random_range(0..n as u64) as usize;
                    let b = ids[t];
                    if b != a && !graph.has_edge(&a, &b) {
                        graph.add_edge(a, b);
                        break;
                    }
                    tries += 1;
                    if tries > 32 {
                        graph.add_edge(a, ids[neighbor]);
                        break;
                    }
                }
            } else {
                graph.add_edge(a, ids[neighbor]);
            }
        }
    }
    Ok(graph)
}

/// Splits `total` into `buckets` sizes proportional to `1/k^alpha`,
/// `k = 1..=buckets`, by largest remainder, so the sizes sum to `total`.
pub fn zipf_allocation(total: usize, buckets: u32, alpha: f64) -> Vec<usize> {
    if buckets == 0 {
        return Vec::new();
    }
    let weights: Vec<f64> = (1..=buckets as usize)
        .map(|k| 1.0 / (k as f64).powf(alpha))
        .collect();
    let norm: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights
        .iter()
        .map(|w| total as f64 * w / norm)
        .collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    // Hand out the leftovers to the largest remainders, index order
    // breaking ties.
    let mut order: Vec<usize> = (0..buckets as usize).collect();
    order.sort_by(|&i, &j| {
        let ri = quotas[i] - sizes[i] as f64;
        let rj = quotas[j] - sizes[j] as f64;
        rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
    });
    for &i in order.iter().take(total - assigned) {
        sizes[i] += 1;
    }
    sizes
}

/// Upper bound on bootstrap reseeds while growing genuine groups.
pub const DEFAULT_RESEED_CAP: u32 = 100;

/// Labels the population: `group_count` genuine groups with Zipf-sized
/// memberships totalling `genuine_fraction` of the users, grown by
/// breadth-first search from random bootstrap users; everyone else is a
/// polluter.
///
/// A bootstrap whose reachable unclaimed region runs out before the group
/// is full is supplemented by another random bootstrap, and the group
/// keeps growing from there. Each extra bootstrap counts against
/// `reseed_cap`. Groups therefore stay BFS-connected whenever the graph
/// allows it, and still fill up when earlier groups have fragmented the
/// unclaimed remainder (the `genuine_fraction = 1` case needs this).
pub fn label_population(
    graph: &mut SocialGraph,
    group_count: u32,
    genuine_fraction: f64,
    zipf_alpha: f64,
    reseed_cap: u32,
    rng: &mut impl Rng,
) -> Result<(), GraphError> {
    if !(0.0..=1.0).contains(&genuine_fraction) {
        return Err(GraphError::BadGenuineFraction(genuine_fraction));
    }
    let users: Vec<NodeId> = graph.users().collect();
    let target = (genuine_fraction * users.len() as f64).round() as usize;
    let sizes = zipf_allocation(target, group_count.min(target.max(1) as u32), zipf_alpha);

    let mut unclaimed: BTreeSet<NodeId> = users.iter().copied().collect();
    let mut labels: BTreeMap<NodeId, Label> = BTreeMap::new();
    let mut reseeds = 0u32;

    for (group, &size) in sizes.iter().enumerate() {
        if size == 0 {
            continue;
        }
        let mut claimed = 0usize;
        let mut first_seed = true;
        while claimed < size {
            if unclaimed.is_empty() {
                return Err(GraphError::LabelingStuck {
                    target,
                    groups: group_count,
                    reseeds,
                });
            }
            if !first_seed {
                reseeds += 1;
                if reseeds > reseed_cap {
                    return Err(GraphError::LabelingStuck {
                        target,
                        groups: group_count,
                        reseeds,
                    });
                }
            }
            first_seed = false;

            // Random bootstrap among the unclaimed users.
            let pick = rng.random_range(0..unclaimed.len());
            let seed = *unclaimed.iter().nth(pick).expect("non-empty");

            // BFS over unclaimed users only; earlier groups keep theirs.
            let mut queue = VecDeque::from([seed]);
            let mut visited: BTreeSet<NodeId> = BTreeSet::from([seed]);
            while let Some(user) = queue.pop_front() {
                unclaimed.remove(&user);
                labels.insert(user, Label::Genuine { group: group as u32 });
                claimed += 1;
                if claimed == size {
                    break;
                }
                for friend in graph.friends(&user) {
                    if unclaimed.contains(&friend) && visited.insert(friend) {
                        queue.push_back(friend);
                    }
                }
            }
        }
    }

    for user in unclaimed {
        labels.insert(user, Label::Polluter);
    }
    graph.labels = labels;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::io::Write;

    fn write_trace(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn trace_edges_are_symmetrized_and_self_loops_dropped() {
        let f = write_trace("# comment\n1 2\n2 1\n1 1\n\n3 1  # trailing\n");
        let graph = load_trace(f.path()).unwrap();
        assert_eq!(graph.user_count(), 3);
        assert_eq!(graph.edge_count(), 2);
        assert!(graph.has_edge(&user_id(1), &user_id(2)));
        assert!(graph.has_edge(&user_id(2), &user_id(1)));
        assert!(!graph.has_edge(&user_id(1), &user_id(1)));
    }

    #[test]
    fn malformed_lines_report_their_number() {
        let f = write_trace("1 2\nnot numbers\n");
        match load_trace(f.path()) {
            Err(GraphError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write_trace("1 2 3\n");
        assert!(matches!(
            load_trace(f.path()),
            Err(GraphError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn trace_counts_match_fixture_header() {
        // Fixture: 5 users, 6 edges (one duplicated).
        let f = write_trace("0 1\n0 2\n1 2\n2 3\n3 4\n4 0\n0 1\n");
        let graph = load_trace(f.path()).unwrap();
        assert_eq!(graph.user_count(), 5);
        assert_eq!(graph.edge_count(), 6);
    }

    #[test]
    fn synth_ring_edge_count_is_exact_without_rewiring() {
        // Rewiring replaces edges one-for-one (with a fallback to the ring
        // edge), so the count stays n * k / 2 unless a rewire collides.
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let graph = synth_graph(100, 4, &mut rng).unwrap();
        let edges = graph.edge_count();
        assert!(edges >= 195 && edges <= 200, "{edges}");
        let stats = graph.stats();
        assert!((stats.avg_degree - 4.0).abs() < 0.2);
    }

    #[test]
    fn synth_is_deterministic_per_seed() {
        let a = synth_graph(200, 8, &mut ChaCha12Rng::seed_from_u64(42)).unwrap();
        let b = synth_graph(200, 8, &mut ChaCha12Rng::seed_from_u64(42)).unwrap();
        for user in a.users() {
            let fa: Vec<NodeId> = a.friends(&user).collect();
            let fb: Vec<NodeId> = b.friends(&user).collect();
            assert_eq!(fa, fb);
        }
    }

    #[test]
    fn small_world_clusters_more_than_a_random_graph() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let graph = synth_graph(500, 8, &mut rng).unwrap();
        let clustering = graph.clustering_coefficient();

        // Erdos-Renyi comparison graph with the same expected degree.
        let mut random = SocialGraph::new();
        let ids: Vec<NodeId> = (0..500u64).map(user_id).collect();
        for &id in &ids {
            random.add_user(id);
        }
        let p = 8.0 / 499.0;
        for i in 0..ids.len() {
            for j in (i + 1)..ids.len() {
                if rng.random_bool(p) {
                    random.add_edge(ids[i], ids[j]);
                }
            }
        }
        assert!(
            clustering > 2.0 * random.clustering_coefficient(),
            "small-world {clustering} vs random {}",
            random.clustering_coefficient()
        );
    }

    #[test]
    fn infeasible_synth_parameters_are_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert!(matches!(
            synth_graph(10, 3, &mut rng),
            Err(GraphError::BadDegree(3))
        ));
        assert!(matches!(
            synth_graph(4, 4, &mut rng),
            Err(GraphError::TooFewUsers { .. })
        ));
    }

    #[test]
    fn zipf_allocation_conserves_and_follows_rank() {
        let sizes = zipf_allocation(1600, 50, 1.0);
        assert_eq!(sizes.iter().sum::<usize>(), 1600);
        // size_k is proportional to 1/k: check the largest five ratios.
        for k in 1..5usize {
            let expected = sizes[0] as f64 / (k + 1) as f64;
            let got = sizes[k] as f64;
            assert!(
                (got - expected).abs() / expected < 0.1,
                "rank {k}: {got} vs {expected}"
            );
        }
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn labeling_conserves_and_separates_groups() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut graph = synth_graph(1000, 8, &mut rng).unwrap();
        label_population(&mut graph, 20, 0.8, 1.0, DEFAULT_RESEED_CAP, &mut rng).unwrap();

        let genuine = graph.genuine_count();
        let polluters = graph.polluter_count();
        assert_eq!(genuine + polluters, 1000);
        assert!((genuine as i64 - 800).unsigned_abs() <= 1);

        // Group sizes approximate the Zipf allocation.
        let mut by_group: BTreeMap<u32, usize> = BTreeMap::new();
        for user in graph.users().collect::<Vec<_>>() {
            if let Some(Label::Genuine { group }) = graph.label(&user) {
                *by_group.entry(group).or_insert(0) += 1;
            }
        }
        let expected = zipf_allocation(genuine, 20, 1.0);
        for (group, &size) in by_group.iter() {
            assert_eq!(size, expected[*group as usize], "group {group}");
        }
    }

    #[test]
    fn beta_zero_labels_everyone_genuine() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut graph = synth_graph(200, 4, &mut rng).unwrap();
        label_population(&mut graph, 10, 1.0, 1.0, DEFAULT_RESEED_CAP, &mut rng).unwrap();
        assert_eq!(graph.genuine_count(), 200);
        assert_eq!(graph.polluter_count(), 0);
    }

    #[test]
    fn labeling_is_deterministic_per_seed() {
        let build = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut graph = synth_graph(300, 6, &mut rng).unwrap();
            label_population(&mut graph, 10, 0.8, 1.0, DEFAULT_RESEED_CAP, &mut rng).unwrap();
            graph
        };
        let a = build(9);
        let b = build(9);
        for user in a.users() {
            assert_eq!(a.label(&user), b.label(&user));
        }
    }

    #[test]
    fn impossible_labeling_reports_stuck() {
        // A graph of isolated users cannot grow any group beyond size 1.
        let mut graph = SocialGraph::new();
        for v in 0..10u64 {
            graph.add_user(user_id(v));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let result = label_population(&mut graph, 1, 0.8, 1.0, 5, &mut rng);
        assert!(matches!(result, Err(GraphError::LabelingStuck { .. })));
    }
}
