//! Network bundle: `nodes.csv` (label, community), `edges.csv`
//! (src, dst, jsd, weight, in_top_k) and `network.json` holding both.

use std::path::{Path, PathBuf};

use bikeshare_core::jsdnet::{top_edge_indices, JsdNetwork};
use bikeshare_core::louvain::Partition;
use serde::{Deserialize, Serialize};

use super::fmt_f64;
use crate::error::{Error, Result};

pub const NODE_COLUMNS: [&str; 2] = ["label", "community"];
pub const EDGE_COLUMNS: [&str; 5] = ["src", "dst", "jsd", "weight", "in_top_k"];
pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const JSON_FILE: &str = "network.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub label: String,
    pub community: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub src: String,
    pub dst: String,
    pub jsd: f64,
    pub weight: f64,
    pub in_top_k: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkBundle {
    pub seed: u64,
    pub resolution: f64,
    pub epsilon: f64,
    pub top_k: usize,
    pub modularity: f64,
    pub communities: usize,
    pub nodes: Vec<NodeRow>,
    pub edges: Vec<EdgeRow>,
}

impl NetworkBundle {
    pub fn new(net: &JsdNetwork, partition: &Partition, top_k: usize, seed: u64, resolution: f64, epsilon: f64) -> Self {
        let mut in_top = vec![false; net.edges.len()];
        for i in top_edge_indices(net, top_k) {
            in_top[i] = true;
        }
        Self {
            seed,
            resolution,
            epsilon,
            top_k,
            modularity: partition.modularity,
            communities: partition.community_count(),
            nodes: net
                .nodes
                .iter()
                .zip(&partition.communities)
                .map(|(label, &community)| NodeRow { label: label.clone(), community })
                .collect(),
            edges: net
                .edges
                .iter()
                .zip(in_top)
                .map(|(e, in_top_k)| EdgeRow {
                    src: net.nodes[e.source].clone(),
                    dst: net.nodes[e.target].clone(),
                    jsd: e.jsd,
                    weight: e.weight,
                    in_top_k,
                })
                .collect(),
        }
    }

    pub fn community_of(&self, label: &str) -> Option<usize> {
        self.nodes.iter().find(|n| n.label == label).map(|n| n.community)
    }
}

/// Writes the three files into `dir` and returns their paths.
pub fn write_network(dir: &Path, bundle: &NetworkBundle) -> Result<Vec<PathBuf>> {
    let nodes = dir.join(NODES_FILE);
    let mut w = super::csv_writer(&nodes)?;
    w.write_record(NODE_COLUMNS).map_err(|e| Error::csv(&nodes, e))?;
    for n in &bundle.nodes {
        w.write_record([n.label.clone(), n.community.to_string()]).map_err(|e| Error::csv(&nodes, e))?;
    }
    super::flush(w, &nodes)?;

    let edges = dir.join(EDGES_FILE);
    let mut w = super::csv_writer(&edges)?;
    w.write_record(EDGE_COLUMNS).map_err(|e| Error::csv(&edges, e))?;
    for e in &bundle.edges {
        w.write_record([e.src.clone(), e.dst.clone(), fmt_f64(e.jsd), fmt_f64(e.weight), e.in_top_k.to_string()])
            .map_err(|err| Error::csv(&edges, err))?;
    }
    super::flush(w, &edges)?;

    let json = dir.join(JSON_FILE);
    super::write_json(&json, bundle)?;
    Ok(vec![nodes, edges, json])
}

/// Accepts the bundle directory or the JSON file itself.
pub fn read_network(path: &Path) -> Result<NetworkBundle> {
    let json = if path.is_dir() { path.join(JSON_FILE) } else { path.to_path_buf() };
    let bundle: NetworkBundle = super::read_json(&json)?;
    let known = |l: &str| bundle.nodes.iter().any(|n| n.label == l);
    if bundle.edges.iter().any(|e| !known(&e.src) || !known(&e.dst)) {
        return Err(Error::format(&json, "edge refers to an unknown node"));
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bikeshare_core::jsdnet::Edge;
    use bikeshare_core::louvain::louvain;

    #[test]
    fn write_and_read() {
        let net = JsdNetwork {
            nodes: vec!["a".into(), "b".into(), "c".into()],
            edges: vec![
                Edge { source: 0, target: 1, jsd: 0.1, weight: 10.0 },
                Edge { source: 0, target: 2, jsd: 0.5, weight: 2.0 },
                Edge { source: 1, target: 2, jsd: 0.25, weight: 4.0 },
            ],
            communities: None,
        };
        let p = louvain(&net.graph().unwrap(), 1, 1.0);
        let bundle = NetworkBundle::new(&net, &p, 2, 1, 1.0, 1e-9);
        assert_eq!(bundle.edges.iter().filter(|e| e.in_top_k).count(), 2);
        assert!(!bundle.edges[1].in_top_k);
        let dir = tempfile::tempdir().unwrap();
        let files = write_network(dir.path(), &bundle).unwrap();
        assert_eq!(files.len(), 3);
        let edges = std::fs::read_to_string(&files[1]).unwrap();
        assert_eq!(edges.lines().next(), Some("src,dst,jsd,weight,in_top_k"));
        assert!(edges.contains("a,c,0.5,2.0,false"));
        assert_eq!(read_network(dir.path()).unwrap(), bundle);
    }
}
