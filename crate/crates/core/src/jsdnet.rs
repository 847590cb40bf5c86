//! Complete weighted network over labelled distributions, with edge weight
//! `1 / max(JSD, epsilon)`, Louvain communities and top-k edge extraction.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::divergence::{check_distributions, js_divergence, DivergenceError};
use crate::louvain::{self, GraphError, Partition, WeightedGraph};
use crate::timeseries::DayDistribution;

/// Caps the weight of identical distributions at `1 / DEFAULT_EPSILON`.
pub const DEFAULT_EPSILON: f64 = 1e-9;
pub const DEFAULT_TOP_K: usize = 50;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("a network needs at least two nodes, got {0}")]
    TooFewNodes(usize),
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Edge {
    /// Always less than `target`.
    pub source: usize,
    pub target: usize,
    pub jsd: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JsdNetwork {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    /// Community id per node once [`detect_communities`] has run.
    pub communities: Option<Vec<usize>>,
}

impl JsdNetwork {
    pub fn graph(&self) -> Result<WeightedGraph, GraphError> {
        WeightedGraph::new(
            self.nodes.len(),
            self.edges
                .iter()
                .map(|e| (e.source, e.target, e.weight))
                .collect(),
        )
    }
}

/// Every unordered node pair becomes one edge; node order follows the input.
pub fn build_network(
    nodes: &[(String, &DayDistribution)],
    epsilon: f64,
) -> Result<JsdNetwork, NetworkError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(NetworkError::BadEpsilon(epsilon));
    }
    if nodes.len() < 2 {
        return Err(NetworkError::TooFewNodes(nodes.len()));
    }
    let dists: Vec<&DayDistribution> = nodes.iter().map(|n| n.1).collect();
    check_distributions(&dists)?;

    let n = nodes.len();
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let jsd = js_divergence(&dists[i].probs, &dists[j].probs)?;
            edges.push(Edge {
                source: i,
                target: j,
                jsd,
                weight: 1.0 / jsd.max(epsilon),
            });
        }
    }
    Ok(JsdNetwork {
        nodes: nodes.iter().map(|n| n.0.clone()).collect(),
        edges,
        communities: None,
    })
}

/// Louvain over the full weighted graph; stores the partition on the network.
pub fn detect_communities(
    network: &mut JsdNetwork,
    seed: u64,
    resolution: f64,
) -> Result<Partition, NetworkError> {
    let partition = louvain::louvain(&network.graph()?, seed, resolution);
    network.communities = Some(partition.communities.clone());
    Ok(partition)
}

fn edge_order(network: &JsdNetwork, a: &Edge, b: &Edge) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then_with(|| network.nodes[a.source].cmp(&network.nodes[b.source]))
        .then_with(|| network.nodes[a.target].cmp(&network.nodes[b.target]))
}

/// Indices into `network.edges` of the `k` heaviest edges, heaviest first.
/// Equal weights are ordered by the (source, target) label pair.
pub fn top_edge_indices(network: &JsdNetwork, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..network.edges.len()).collect();
    idx.sort_by(|&a, &b| edge_order(network, &network.edges[a], &network.edges[b]));
    idx.truncate(k);
    idx
}

pub fn top_edges(network: &JsdNetwork, k: usize) -> Vec<Edge> {
    top_edge_indices(network, k)
        .into_iter()
        .map(|i| network.edges[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::Day;
    use crate::divergence::js_divergence;
    use crate::timeseries::{DayKey, Direction};
    use alloc::format;
    use alloc::vec;
    use alloc::vec::Vec;

    fn dist(counts: Vec<u64>) -> DayDistribution {
        DayDistribution::from_counts("X", DayKey::Day(Day::Mon), Direction::Rental, 60, counts)
            .unwrap()
    }

    fn peaked(at: usize) -> Vec<u64> {
        let mut c = vec![1u64; 24];
        c[at] = 30;
        c
    }

    #[test]
    fn identical_pair_is_capped() {
        let a = dist(peaked(8));
        let b = dist(peaked(8));
        let net = build_network(&[("a".into(), &a), ("b".into(), &b)], 1e-9).unwrap();
        assert_eq!(net.edges.len(), 1);
        assert!((net.edges[0].weight - 1e9).abs() / 1e9 < 1e-12);
        assert!(net.edges[0].weight.is_finite());
    }

    #[test]
    fn forty_two_nodes_have_861_edges() {
        let dists: Vec<_> = (0..42).map(|i| dist(peaked(i % 24))).collect();
        let nodes: Vec<_> = dists
            .iter()
            .enumerate()
            .map(|(i, d)| (format!("c{}-{}", i / 7, i % 7), d))
            .collect();
        let net = build_network(&nodes, DEFAULT_EPSILON).unwrap();
        assert_eq!(net.nodes.len(), 42);
        assert_eq!(net.edges.len(), 861);
        assert!(net.edges.iter().all(|e| e.weight.is_finite() && e.weight > 0.0 && e.source < e.target));
    }

    #[test]
    fn weights_are_inverse_jsd() {
        let ds = [dist(peaked(8)), dist(peaked(12)), dist(vec![1; 24])];
        let nodes: Vec<_> = ds.iter().enumerate().map(|(i, d)| (format!("n{i}"), d)).collect();
        let net = build_network(&nodes, DEFAULT_EPSILON).unwrap();
        assert_eq!(net.edges.len(), 3);
        for e in &net.edges {
            let jsd = js_divergence(&ds[e.source].probs, &ds[e.target].probs).unwrap();
            assert_eq!(e.jsd, jsd);
            assert_eq!(e.weight, 1.0 / jsd);
        }
    }

    #[test]
    fn build_errors() {
        let a = dist(peaked(8));
        let empty = dist(vec![0; 24]);
        assert!(matches!(
            build_network(&[("a".into(), &a)], 1e-9),
            Err(NetworkError::TooFewNodes(1))
        ));
        assert!(matches!(
            build_network(&[("a".into(), &a), ("e".into(), &empty)], 1e-9),
            Err(NetworkError::Divergence(DivergenceError::EmptyDistribution(_)))
        ));
        assert!(build_network(&[("a".into(), &a), ("b".into(), &a)], 0.0).is_err());
    }

    fn five_edge_net() -> JsdNetwork {
        let w = [3.0, 9.0, 1.0, 7.0, 5.0];
        let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)];
        JsdNetwork {
            nodes: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            edges: pairs
                .iter()
                .zip(w)
                .map(|(&(s, t), w)| Edge { source: s, target: t, jsd: 1.0 / w, weight: w })
                .collect(),
            communities: None,
        }
    }

    #[test]
    fn top_two_of_five() {
        let net = five_edge_net();
        let top = top_edges(&net, 2);
        assert_eq!(top.iter().map(|e| e.weight).collect::<Vec<_>>(), vec![9.0, 7.0]);
        assert!(top_edges(&net, 0).is_empty());
        assert_eq!(top_edges(&net, 10).len(), 5);
    }

    #[test]
    fn top_edges_tie_break_by_labels() {
        let mut net = five_edge_net();
        for e in &mut net.edges {
            e.weight = 1.0;
        }
        let top = top_edges(&net, 5);
        let pairs: Vec<_> = top.iter().map(|e| (e.source, e.target)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn communities_stored_on_network() {
        let ds: Vec<_> = [8, 8, 8, 18, 18, 18].iter().enumerate().map(|(i, &h)| {
            let mut c = peaked(h);
            c[i] += 2;
            dist(c)
        }).collect();
        let nodes: Vec<_> = ds.iter().enumerate().map(|(i, d)| (format!("n{i}"), d)).collect();
        let mut net = build_network(&nodes, DEFAULT_EPSILON).unwrap();
        let p = detect_communities(&mut net, 42, 1.0).unwrap();
        assert_eq!(net.communities.as_deref(), Some(&p.communities[..]));
        assert_eq!(p.communities, vec![0, 0, 0, 1, 1, 1]);
    }
}
