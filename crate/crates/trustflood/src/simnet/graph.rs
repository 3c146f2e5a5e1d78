//! Social graph fixture: nodes, mutual friendship edges, and trust seed data
//! (initial ratings and manual overrides).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::ids::NodeId;

use super::SimError;

/// Directed trust override seed. Friendship is mutual but trust is not:
/// a -> b and b -> a may carry different values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrustSeed {
    pub from: String,
    pub to: String,
    pub value: f64,
    /// Override key; defaults to the meronomy root (one dial per friend).
    #[serde(default)]
    pub task_key: Option<String>,
}

/// Pre-existing rating seed, resolved against the hierarchies at build time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatingSeed {
    pub requester: String,
    pub volunteer: String,
    pub activity: String,
    pub object: String,
    pub value: u8,
    #[serde(default)]
    pub time: u64,
}

/// On-disk shape of a graph document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDoc {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub trust: Vec<TrustSeed>,
    #[serde(default)]
    pub ratings: Vec<RatingSeed>,
}

impl GraphDoc {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }
}

/// Validated friendship graph. Edges are stored normalized (low, high), so
/// each mutual friendship appears once.
#[derive(Debug, Clone)]
pub struct SocialGraph {
    nodes: BTreeSet<NodeId>,
    edges: BTreeSet<(NodeId, NodeId)>,
}

impl SocialGraph {
    pub fn from_doc(doc: &GraphDoc) -> Result<Self, SimError> {
        let mut nodes = BTreeSet::new();
        for name in &doc.nodes {
            if name.is_empty() || name.contains('\t') || name.contains('\n') {
                return Err(SimError::Graph(format!("invalid node name {name:?}")));
            }
            if !nodes.insert(NodeId::from(name.as_str())) {
                return Err(SimError::Graph(format!("duplicate node {name:?}")));
            }
        }
        let mut edges = BTreeSet::new();
        for (a, b) in &doc.edges {
            let (a, b) = (NodeId::from(a.as_str()), NodeId::from(b.as_str()));
            if a == b {
                return Err(SimError::Graph(format!("self-edge on {a}")));
            }
            for end in [&a, &b] {
                if !nodes.contains(end) {
                    return Err(SimError::Graph(format!(
                        "edge references unknown node {end}"
                    )));
                }
            }
            let edge = if a < b { (a, b) } else { (b, a) };
            edges.insert(edge);
        }
        Ok(SocialGraph { nodes, edges })
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.nodes.contains(node)
    }

    pub fn neighbors(&self, node: &NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        for (a, b) in &self.edges {
            if a == node {
                out.insert(b.clone());
            } else if b == node {
                out.insert(a.clone());
            }
        }
        out
    }

    pub fn adjacency(&self) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> = self
            .nodes
            .iter()
            .map(|n| (n.clone(), BTreeSet::new()))
            .collect();
        for (a, b) in &self.edges {
            adj.get_mut(a).unwrap().insert(b.clone());
            adj.get_mut(b).unwrap().insert(a.clone());
        }
        adj
    }

    /// Friendship distance in hops; `None` when unreachable.
    pub fn hop_distance(&self, from: &NodeId, to: &NodeId) -> Option<u32> {
        if from == to {
            return Some(0);
        }
        let adj = self.adjacency();
        let mut dist: BTreeMap<&NodeId, u32> = BTreeMap::new();
        dist.insert(from, 0);
        let mut queue = VecDeque::from([from]);
        while let Some(current) = queue.pop_front() {
            let d = dist[current];
            for next in &adj[current] {
                if !dist.contains_key(next) {
                    if next == to {
                        return Some(d + 1);
                    }
                    dist.insert(next, d + 1);
                    queue.push_back(next);
                }
            }
        }
        None
    }
}
