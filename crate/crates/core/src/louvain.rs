//! Louvain modularity optimisation on undirected weighted graphs.
//!
//! Each level repeatedly moves single nodes to the neighbouring community
//! with the largest modularity gain until a full pass makes no move, then
//! collapses communities into super-nodes (internal weight becomes a
//! self-loop) and starts the next level. Stops when a level makes no move.
//! The node visit order of every level is shuffled by a seeded generator,
//! so a fixed seed gives a fixed partition.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_RESOLUTION: f64 = 1.0;

const MAX_PASSES_PER_LEVEL: usize = 1_000;

/// Undirected graph given as an edge list. Parallel edges add up.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("edge ({0}, {1}) has non-positive or non-finite weight {2}")]
    BadWeight(usize, usize, f64),
}

impl WeightedGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self, GraphError> {
        for &(i, j, w) in &edges {
            if i >= n || j >= n {
                return Err(GraphError::NodeOutOfRange(i, j, n));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(GraphError::BadWeight(i, j, w));
            }
        }
        Ok(Self { n, edges })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Total edge weight `m`, each edge (and self-loop) counted once.
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }

    /// Weighted degrees; a self-loop contributes twice its weight.
    pub fn degrees(&self) -> Vec<f64> {
        let mut k = vec![0.0; self.n];
        for &(i, j, w) in &self.edges {
            k[i] += w;
            k[j] += w;
        }
        k
    }
}

/// Modularity `sum_c [ L_c / m - resolution * (D_c / 2m)^2 ]` where `L_c` is
/// the weight inside community `c` and `D_c` its total degree.
pub fn modularity(graph: &WeightedGraph, communities: &[usize], resolution: f64) -> f64 {
    assert_eq!(communities.len(), graph.n, "one community label per node");
    let m = graph.total_weight();
    if m == 0.0 {
        return 0.0;
    }
    let mut inside: BTreeMap<usize, f64> = BTreeMap::new();
    let mut degree: BTreeMap<usize, f64> = BTreeMap::new();
    for &(i, j, w) in &graph.edges {
        if communities[i] == communities[j] {
            *inside.entry(communities[i]).or_default() += w;
        }
        *degree.entry(communities[i]).or_default() += w;
        *degree.entry(communities[j]).or_default() += w;
    }
    degree
        .iter()
        .map(|(c, &d)| {
            let l = inside.get(c).copied().unwrap_or(0.0);
            l / m - resolution * (d / (2.0 * m)) * (d / (2.0 * m))
        })
        .sum()
}

/// Relabels communities `0..k` in order of first appearance.
pub fn canonical_labels(communities: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    communities
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Community id per node, canonically numbered from 0.
    pub communities: Vec<usize>,
    pub modularity: f64,
    /// Modularity of the original graph's partition after each level,
    /// starting with the all-singletons partition.
    pub level_modularity: Vec<f64>,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.communities.iter().max().map_or(0, |&c| c + 1)
    }

    /// Node indices per community, ordered by community id.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.community_count()];
        for (node, &c) in self.communities.iter().enumerate() {
            groups[c].push(node);
        }
        groups
    }
}

/// Working graph for one level: dense-enough adjacency lists plus self-loops.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degrees: Vec<f64>,
}

impl Level {
    fn from_graph(graph: &WeightedGraph) -> Self {
        let n = graph.n;
        let mut merged: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        let mut self_loops = vec![0.0; n];
        for &(i, j, w) in &graph.edges {
            if i == j {
                self_loops[i] += w;
            } else {
                *merged[i].entry(j).or_default() += w;
                *merged[j].entry(i).or_default() += w;
            }
        }
        Self::from_parts(merged, self_loops)
    }

    fn from_parts(merged: Vec<BTreeMap<usize, f64>>, self_loops: Vec<f64>) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = merged
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect();
        let degrees = adj
            .iter()
            .zip(&self_loops)
            .map(|(nbrs, &s)| nbrs.iter().map(|e| e.1).sum::<f64>() + 2.0 * s)
            .collect();
        Self {
            adj,
            self_loops,
            degrees,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// Local moving phase. Returns the community of every node and whether
    /// any node moved.
    fn local_moves(&self, m: f64, resolution: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut community: Vec<usize> = (0..n).collect();
        let mut community_degree = self.degrees.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut moved_any = false;
        // Reused scratch map: community -> weight from the current node.
        let mut links: BTreeMap<usize, f64> = BTreeMap::new();
        for _ in 0..MAX_PASSES_PER_LEVEL {
            let mut moved = false;
            for &node in &order {
                let current = community[node];
                let k = self.degrees[node];
                community_degree[current] -= k;

                links.clear();
                links.insert(current, 0.0);
                for &(nbr, w) in &self.adj[node] {
                    *links.entry(community[nbr]).or_default() += w;
                }

                // Gains scaled by m: k_in - resolution * k * D_c / 2m.
                let gain = |c: usize, k_in: f64| k_in - resolution * k * community_degree[c] / (2.0 * m);
                let stay = gain(current, links[&current]);
                let mut best = current;
                let mut best_gain = stay;
                for (&c, &k_in) in &links {
                    let g = gain(c, k_in);
                    if g > best_gain {
                        best = c;
                        best_gain = g;
                    }
                }
                // Require a gain above rounding noise to avoid oscillation.
                if best != current && best_gain - stay > 1e-12 * (k + m) {
                    community[node] = best;
                    moved = true;
                    moved_any = true;
                } else {
                    best = current;
                }
                community_degree[best] += k;
            }
            if !moved {
                break;
            }
        }
        (canonical_labels(&community), moved_any)
    }

    fn aggregate(&self, community: &[usize]) -> Level {
        let k = community.iter().max().map_or(0, |&c| c + 1);
        let mut merged: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        let mut self_loops = vec![0.0; k];
        for (i, nbrs) in self.adj.iter().enumerate() {
            let ci = community[i];
            self_loops[ci] += self.self_loops[i];
            for &(j, w) in nbrs {
                let cj = community[j];
                if ci == cj {
                    // Each internal edge is seen from both ends.
                    self_loops[ci] += 0.5 * w;
                } else {
                    *merged[ci].entry(cj).or_default() += w;
                }
            }
        }
        Level::from_parts(merged, self_loops)
    }
}

/// Runs Louvain from the all-singletons partition.
pub fn louvain(graph: &WeightedGraph, seed: u64, resolution: f64) -> Partition {
    let n = graph.n;
    let m = graph.total_weight();
    let mut membership: Vec<usize> = (0..n).collect();
    let mut level_modularity = vec![modularity(graph, &membership, resolution)];
    if n == 0 || m == 0.0 {
        return Partition {
            modularity: level_modularity[0],
            communities: membership,
            level_modularity,
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level::from_graph(graph);
    loop {
        let (community, moved) = level.local_moves(m, resolution, &mut rng);
        if !moved {
            break;
        }
        for c in membership.iter_mut() {
            *c = community[*c];
        }
        let q = modularity(graph, &membership, resolution);
        debug_assert!(
            q >= level_modularity.last().copied().unwrap_or(f64::MIN) - 1e-12,
            "modularity decreased across levels"
        );
        level_modularity.push(q);
        level = level.aggregate(&community);
        if level.len() == 1 {
            break;
        }
    }

    let communities = canonical_labels(&membership);
    Partition {
        modularity: modularity(graph, &communities, resolution),
        communities,
        level_modularity,
    }
}
