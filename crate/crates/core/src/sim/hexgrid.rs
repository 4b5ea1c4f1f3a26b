//! Hexagonal-like test topologies.
//!
//! Nodes sit on a triangular lattice, so interior nodes have six neighbors.
//! The master is at the apex of a 120° wedge and the remaining nodes fill the
//! wedge ring by ring: ring `d` (all nodes `d` hops away) holds `2d + 1`
//! nodes. The last ring is filled from one edge of the wedge.

use crate::{NetworkGraph, NodeId};

/// How node ids map onto lattice positions ordered by distance from the master.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdAssignment {
    /// Nearest nodes get the lowest ids.
    Forward,
    /// Farthest node gets id 1, the nearest gets `n - 1`.
    Reverse,
}

/// Axial lattice coordinates of the `n` positions, master first.
pub fn lattice_positions(n: usize) -> Vec<(i32, i32)> {
    let mut out = Vec::with_capacity(n);
    let mut d = 0i32;
    while out.len() < n {
        if d == 0 {
            out.push((0, 0));
        } else {
            for j in 0..=2 * d {
                let (a, b, c) = if j <= d {
                    (d - j, j, 0)
                } else {
                    (0, 2 * d - j, j - d)
                };
                out.push((a - c, b + c));
                if out.len() == n {
                    break;
                }
            }
        }
        d += 1;
    }
    out
}

fn hex_distance(p: (i32, i32), q: (i32, i32)) -> i32 {
    let dq = p.0 - q.0;
    let dr = p.1 - q.1;
    (dq.abs() + dr.abs() + (dq + dr).abs()) / 2
}

/// Lossless hexagonal-like graph of `n` nodes with the given id assignment.
pub fn hexagonal(n: usize, ids: IdAssignment) -> NetworkGraph {
    let pos = lattice_positions(n);
    let id = |i: usize| -> NodeId {
        match ids {
            IdAssignment::Forward => NodeId(i as u8),
            IdAssignment::Reverse if i == 0 => NodeId(0),
            IdAssignment::Reverse => NodeId((n - i) as u8),
        }
    };
    let mut g = NetworkGraph::new();
    for i in 0..n {
        g.add_node(id(i));
        for j in 0..i {
            if hex_distance(pos[i], pos[j]) == 1 {
                g.add_edge(id(i), id(j), 1.0);
            }
        }
    }
    g
}
