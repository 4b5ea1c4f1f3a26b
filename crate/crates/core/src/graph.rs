//! Undirected network graph with optional per-link reliability.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::NodeId;

/// Undirected graph over node ids. Each edge carries a reliability in
/// `[0, 1]`, used by the radio model as a per-frame success probability.
/// Graphs built from collected topology use reliability 1.0 throughout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkGraph {
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    reliability: BTreeMap<(NodeId, NodeId), f64>,
}

fn key(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

impl NetworkGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from lossless edges; endpoints are added as nodes.
    pub fn from_edges<I>(edges: I) -> Self
    where
        I: IntoIterator<Item = (u8, u8)>,
    {
        let mut g = Self::new();
        for (u, v) in edges {
            g.add_edge(NodeId(u), NodeId(v), 1.0);
        }
        g
    }

    pub fn add_node(&mut self, n: NodeId) {
        self.adjacency.entry(n).or_default();
    }

    /// Adds (or updates) an undirected edge. Self loops are ignored.
    pub fn add_edge(&mut self, u: NodeId, v: NodeId, reliability: f64) {
        if u == v {
            return;
        }
        self.adjacency.entry(u).or_default().insert(v);
        self.adjacency.entry(v).or_default().insert(u);
        self.reliability
            .insert(key(u, v), reliability.clamp(0.0, 1.0));
    }

    pub fn remove_edge(&mut self, u: NodeId, v: NodeId) -> bool {
        let removed = self.reliability.remove(&key(u, v)).is_some();
        if let Some(a) = self.adjacency.get_mut(&u) {
            a.remove(&v);
        }
        if let Some(a) = self.adjacency.get_mut(&v) {
            a.remove(&u);
        }
        removed
    }

    /// Removes a node and all its edges.
    pub fn remove_node(&mut self, n: NodeId) {
        if let Some(adj) = self.adjacency.remove(&n) {
            for m in adj {
                if let Some(a) = self.adjacency.get_mut(&m) {
                    a.remove(&n);
                }
                self.reliability.remove(&key(n, m));
            }
        }
    }

    pub fn contains_node(&self, n: NodeId) -> bool {
        self.adjacency.contains_key(&n)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.reliability.contains_key(&key(u, v))
    }

    /// Reliability of the edge, `None` if absent.
    pub fn reliability(&self, u: NodeId, v: NodeId) -> Option<f64> {
        self.reliability.get(&key(u, v)).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.reliability.len()
    }

    /// Edges as `(u, v, reliability)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.reliability.iter().map(|(&(u, v), &r)| (u, v, r))
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, n: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency
            .get(&n)
            .into_iter()
            .flat_map(|s| s.iter().copied())
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.adjacency.get(&n).map_or(0, |s| s.len())
    }

    /// Edge set as ordered pairs, ignoring reliability.
    pub fn edge_set(&self) -> BTreeSet<(NodeId, NodeId)> {
        self.reliability.keys().copied().collect()
    }

    /// Copy keeping only edges with reliability at least `min`.
    pub fn filtered(&self, min: f64) -> NetworkGraph {
        let mut g = NetworkGraph::new();
        for n in self.nodes() {
            g.add_node(n);
        }
        for (u, v, r) in self.edges() {
            if r >= min {
                g.add_edge(u, v, r);
            }
        }
        g
    }

    /// Hop distances from `src` by breadth-first search.
    pub fn bfs_distances(&self, src: NodeId) -> BTreeMap<NodeId, u32> {
        let mut dist = BTreeMap::new();
        if !self.contains_node(src) {
            return dist;
        }
        dist.insert(src, 0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            for v in self.neighbors(u) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                    e.insert(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Subgraph induced by the nodes reachable from `src`.
    pub fn component_of(&self, src: NodeId) -> NetworkGraph {
        let reach = self.bfs_distances(src);
        let mut g = NetworkGraph::new();
        for &n in reach.keys() {
            g.add_node(n);
        }
        for (u, v, r) in self.edges() {
            if reach.contains_key(&u) && reach.contains_key(&v) {
                g.add_edge(u, v, r);
            }
        }
        g
    }

    /// Relabels nodes through `map[old] = new`. Nodes beyond the map keep their id.
    pub fn relabeled(&self, map: &[u8]) -> NetworkGraph {
        let f = |n: NodeId| NodeId(map.get(n.index()).copied().unwrap_or(n.0));
        let mut g = NetworkGraph::new();
        for n in self.nodes() {
            g.add_node(f(n));
        }
        for (u, v, r) in self.edges() {
            g.add_edge(f(u), f(v), r);
        }
        g
    }
}
