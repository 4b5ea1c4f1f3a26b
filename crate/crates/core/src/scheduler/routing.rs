use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::{NetworkGraph, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RoutingError {
    #[error("{dst} is unreachable from {src}")]
    Unreachable { src: NodeId, dst: NodeId },
}

type Edge = (NodeId, NodeId);

fn ekey(a: NodeId, b: NodeId) -> Edge {
    (a.min(b), a.max(b))
}

/// Shortest path by BFS avoiding `banned` edges. Neighbors are expanded in
/// ascending id order, so ties go to the lowest ids.
fn bfs_path(
    g: &NetworkGraph,
    src: NodeId,
    dst: NodeId,
    banned: &BTreeSet<Edge>,
) -> Option<Vec<NodeId>> {
    let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut queue = VecDeque::from([src]);
    parent.insert(src, src);
    while let Some(u) = queue.pop_front() {
        if u == dst {
            break;
        }
        for v in g.neighbors(u) {
            if !parent.contains_key(&v) && !banned.contains(&ekey(u, v)) {
                parent.insert(v, u);
                queue.push_back(v);
            }
        }
    }
    if !parent.contains_key(&dst) {
        return None;
    }
    let mut path = vec![dst];
    let mut cur = dst;
    while cur != src {
        cur = parent[&cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

/// Up to `k` edge-disjoint paths of minimum total length, via successive
/// shortest augmenting paths on a unit-capacity flow network.
fn disjoint_paths_flow(g: &NetworkGraph, src: NodeId, dst: NodeId, k: usize) -> Vec<Vec<NodeId>> {
    // flow[(u, v)] = 1 when one unit goes u -> v along undirected edge {u, v}
    let mut flow: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let nodes: Vec<NodeId> = g.nodes().collect();
    for _ in 0..k {
        // Bellman-Ford over the residual graph: forward arc cost 1 if unused,
        // cancelling an opposite unit costs -1.
        let mut dist: BTreeMap<NodeId, i64> = BTreeMap::new();
        let mut pred: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        dist.insert(src, 0);
        for _ in 0..nodes.len() {
            let mut changed = false;
            for &u in &nodes {
                let Some(&du) = dist.get(&u) else { continue };
                for v in g.neighbors(u) {
                    if flow.contains(&(u, v)) {
                        continue;
                    }
                    let cost = if flow.contains(&(v, u)) { -1 } else { 1 };
                    let nd = du + cost;
                    if dist.get(&v).is_none_or(|&dv| nd < dv) {
                        dist.insert(v, nd);
                        pred.insert(v, u);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if !dist.contains_key(&dst) {
            break;
        }
        let mut v = dst;
        let mut guard = 0;
        while v != src && guard <= nodes.len() {
            let u = pred[&v];
            if !flow.remove(&(v, u)) {
                flow.insert((u, v));
            }
            v = u;
            guard += 1;
        }
    }
    // decompose into simple paths, preferring low ids at each branch
    let mut out = Vec::new();
    loop {
        let mut path = vec![src];
        let mut cur = src;
        let mut seen = BTreeSet::from([src]);
        while cur != dst {
            let next = g.neighbors(cur).find(|&v| flow.contains(&(cur, v)));
            let Some(v) = next else { break };
            flow.remove(&(cur, v));
            if !seen.insert(v) {
                // cut the cycle
                while let Some(&last) = path.last() {
                    if last == v {
                        break;
                    }
                    seen.remove(&last);
                    path.pop();
                }
                cur = v;
                continue;
            }
            path.push(v);
            cur = v;
        }
        if cur != dst {
            break;
        }
        out.push(path);
    }
    out.sort_by_key(|p| p.len());
    out
}

/// Path minimizing (edges shared with `used`, hops) lexicographically.
fn least_shared_path(
    g: &NetworkGraph,
    src: NodeId,
    dst: NodeId,
    used: &BTreeMap<Edge, u32>,
) -> Option<Vec<NodeId>> {
    let mut best: BTreeMap<NodeId, (u32, u32)> = BTreeMap::new();
    let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut frontier: BTreeSet<((u32, u32), NodeId)> = BTreeSet::new();
    best.insert(src, (0, 0));
    frontier.insert(((0, 0), src));
    while let Some((cost, u)) = frontier.pop_first() {
        if best.get(&u).is_some_and(|&c| c < cost) {
            continue;
        }
        if u == dst {
            break;
        }
        for v in g.neighbors(u) {
            let shared = used.get(&ekey(u, v)).copied().unwrap_or(0);
            let nc = (cost.0 + shared, cost.1 + 1);
            if best.get(&v).is_none_or(|&c| nc < c) {
                best.insert(v, nc);
                parent.insert(v, u);
                frontier.insert((nc, v));
            }
        }
    }
    if !best.contains_key(&dst) {
        return None;
    }
    let mut path = vec![dst];
    let mut cur = dst;
    while cur != src {
        cur = parent[&cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

/// Routes `k` paths from `src` to `dst`.
///
/// The first path is the BFS shortest path. Further paths are shortest paths
/// edge-disjoint from all previous ones. When sequential selection runs out
/// but a minimum-cost flow finds more disjoint paths, the flow's paths are used
/// instead. Any paths still missing minimize the number of shared edges.
pub fn route_paths(
    g: &NetworkGraph,
    src: NodeId,
    dst: NodeId,
    k: usize,
) -> Result<Vec<Vec<NodeId>>, RoutingError> {
    let unreachable = RoutingError::Unreachable { src, dst };
    if src == dst || !g.contains_node(src) || !g.contains_node(dst) {
        return Err(unreachable);
    }
    let mut banned = BTreeSet::new();
    let mut paths: Vec<Vec<NodeId>> = Vec::new();
    while paths.len() < k {
        let Some(p) = bfs_path(g, src, dst, &banned) else {
            break;
        };
        for w in p.windows(2) {
            banned.insert(ekey(w[0], w[1]));
        }
        paths.push(p);
    }
    if paths.is_empty() {
        return Err(unreachable);
    }
    if paths.len() < k {
        let flow = disjoint_paths_flow(g, src, dst, k);
        if flow.len() > paths.len() {
            paths = flow;
        }
    }
    while paths.len() < k {
        let mut used: BTreeMap<Edge, u32> = BTreeMap::new();
        for p in &paths {
            for w in p.windows(2) {
                *used.entry(ekey(w[0], w[1])).or_default() += 1;
            }
        }
        match least_shared_path(g, src, dst, &used) {
            Some(p) => paths.push(p),
            None => break,
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(p: &[NodeId]) -> Vec<u8> {
        p.iter().map(|n| n.0).collect()
    }

    #[test]
    fn diamond_gives_two_disjoint_paths() {
        let g = NetworkGraph::from_edges([(0, 1), (0, 2), (1, 3), (2, 3)]);
        let p = route_paths(&g, NodeId(3), NodeId(0), 2).unwrap();
        assert_eq!(ids(&p[0]), vec![3, 1, 0]);
        assert_eq!(ids(&p[1]), vec![3, 2, 0]);
    }

    #[test]
    fn adjacent_pair_is_one_hop() {
        let g = NetworkGraph::from_edges([(0, 1), (1, 2)]);
        let p = route_paths(&g, NodeId(1), NodeId(0), 1).unwrap();
        assert_eq!(ids(&p[0]), vec![1, 0]);
    }

    #[test]
    fn disconnected_pair_is_unreachable() {
        let g = NetworkGraph::from_edges([(0, 1), (2, 3)]);
        assert!(route_paths(&g, NodeId(3), NodeId(0), 1).is_err());
    }

    #[test]
    fn flow_recovers_disjoint_pair_greedy_misses() {
        // shortest path 0-1-2-3 blocks both alternatives when taken first
        let g = NetworkGraph::from_edges([(0, 1), (1, 2), (2, 3), (0, 4), (4, 2), (1, 5), (5, 3)]);
        let p = route_paths(&g, NodeId(0), NodeId(3), 2).unwrap();
        assert_eq!(p.len(), 2);
        let e = |p: &Vec<NodeId>| -> BTreeSet<Edge> {
            p.windows(2).map(|w| ekey(w[0], w[1])).collect()
        };
        assert!(e(&p[0]).is_disjoint(&e(&p[1])));
    }

    #[test]
    fn line_falls_back_to_shared_edges() {
        let g = NetworkGraph::from_edges([(0, 1), (1, 2)]);
        let p = route_paths(&g, NodeId(2), NodeId(0), 2).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0], p[1]);
    }
}
