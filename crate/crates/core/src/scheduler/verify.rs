use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::{NetworkGraph, NodeId};

use super::{Schedule, Transmission};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Proposition {
    Connectivity,
    UniqueSenderReceiver,
    ContemporaryCoexistence,
    NoSpuriousTransmission,
    Periodicity,
    Causality,
    SinglePath,
}

impl Proposition {
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Proposition::Connectivity => "connectivity",
            Proposition::UniqueSenderReceiver => "unique-sender-receiver",
            Proposition::ContemporaryCoexistence => "contemporary-coexistence",
            Proposition::NoSpuriousTransmission => "no-spurious-transmission",
            Proposition::Periodicity => "periodicity",
            Proposition::Causality => "causality",
            Proposition::SinglePath => "single-path",
        }
    }
}

impl fmt::Display for Proposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub proposition: Proposition,
    pub slot: u32,
    pub nodes: Vec<NodeId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
        write!(
            f,
            "{} slot={} nodes={} {}",
            self.proposition,
            self.slot,
            nodes.join(","),
            self.detail
        )
    }
}

/// Checks a schedule against the seven scheduling propositions.
///
/// Every breach is reported separately: one violation per offending
/// transmission for (1), (4), (5), (6) and (7), one per offending pair of
/// concurrent transmissions for (2) and (3). Identical membership entries are
/// counted once.
pub fn verify_schedule(schedule: &Schedule, graph: &NetworkGraph) -> Vec<Violation> {
    let grid = schedule.grid();
    let mut out = Vec::new();
    let v = |p: Proposition, slot: u32, nodes: Vec<NodeId>, detail: String| Violation {
        proposition: p,
        slot,
        nodes,
        detail,
    };

    let members: BTreeSet<(Transmission, u16, u8)> = schedule
        .transmissions
        .iter()
        .map(|t| (t.tx, t.stream, t.path))
        .collect();
    let txs: BTreeSet<Transmission> = members.iter().map(|m| m.0).collect();

    for t in &txs {
        if grid.slot(t.slot).is_none() {
            out.push(v(
                Proposition::NoSpuriousTransmission,
                t.slot,
                vec![t.sender, t.receiver],
                format!("{t} lies outside the data superframe"),
            ));
        }
    }

    // (1) connectivity
    for t in &txs {
        if t.sender == t.receiver || !graph.has_edge(t.sender, t.receiver) {
            out.push(v(
                Proposition::Connectivity,
                t.slot,
                vec![t.sender, t.receiver],
                format!("{t} uses a link not in the graph"),
            ));
        }
    }

    // (2) and (3), pairwise per slot
    let mut by_slot: BTreeMap<u32, Vec<Transmission>> = BTreeMap::new();
    for t in &txs {
        by_slot.entry(t.slot).or_default().push(*t);
    }
    for (&slot, list) in &by_slot {
        for (a_idx, a) in list.iter().enumerate() {
            for b in &list[a_idx + 1..] {
                let shared: BTreeSet<NodeId> = [a.sender, a.receiver]
                    .into_iter()
                    .filter(|n| *n == b.sender || *n == b.receiver)
                    .collect();
                if !shared.is_empty() {
                    out.push(v(
                        Proposition::UniqueSenderReceiver,
                        slot,
                        shared.into_iter().collect(),
                        format!("{a} and {b} share a node"),
                    ));
                }
                if a.sender != b.sender
                    && a.receiver != b.receiver
                    && (graph.has_edge(a.sender, b.receiver)
                        || graph.has_edge(b.sender, a.receiver))
                {
                    out.push(v(
                        Proposition::ContemporaryCoexistence,
                        slot,
                        vec![a.sender, a.receiver, b.sender, b.receiver],
                        format!("{a} and {b} interfere"),
                    ));
                }
            }
        }
    }

    // (4) every transmission belongs to at least one registered path; tags
    // naming no path are ignored when another tag is valid
    let valid: Vec<(Transmission, u16, u8)> = members
        .iter()
        .copied()
        .filter(|&(_, s, z)| {
            schedule
                .streams
                .get(s as usize)
                .is_some_and(|st| z < st.spatial_redundancy)
        })
        .collect();
    for t in &txs {
        if !valid.iter().any(|m| m.0 == *t) {
            out.push(v(
                Proposition::NoSpuriousTransmission,
                t.slot,
                vec![t.sender, t.receiver],
                format!("{t} belongs to no scheduled path"),
            ));
        }
    }

    // (5) periodicity, (6) causality
    let mut by_path: BTreeMap<(u16, u8), Vec<Transmission>> = BTreeMap::new();
    for &(t, s, z) in &valid {
        by_path.entry((s, z)).or_default().push(t);
    }
    for (&(s, _), path_txs) in &by_path {
        let st = &schedule.streams[s as usize];
        let Some(p) = grid.period_tiles(st.period_ms) else {
            for t in path_txs {
                out.push(v(
                    Proposition::Periodicity,
                    t.slot,
                    vec![t.sender, t.receiver],
                    format!("period {} ms is not a whole number of tiles", st.period_ms),
                ));
            }
            continue;
        };
        let span = grid.period_span(p);
        for t in path_txs {
            if grid.slot(t.slot).is_none() {
                continue;
            }
            let next = grid.shift(t.slot, p);
            let repeats = next.is_some_and(|n| txs.contains(&Transmission { slot: n, ..*t }));
            if !repeats {
                out.push(v(
                    Proposition::Periodicity,
                    t.slot,
                    vec![t.sender, t.receiver],
                    format!("{t} does not recur one period ({p} tiles) later"),
                ));
            }
            let within = |d: u64| d > 0 && d < span;
            if t.sender != st.src {
                let ok = path_txs.iter().any(|u| {
                    u.receiver == t.sender
                        && grid.slot(u.slot).is_some()
                        && within(grid.cyclic_distance(u.slot, t.slot))
                });
                if !ok {
                    out.push(v(
                        Proposition::Causality,
                        t.slot,
                        vec![t.sender, t.receiver],
                        format!(
                            "{t}: nothing reaches {} within the preceding period",
                            t.sender
                        ),
                    ));
                }
            }
            if t.receiver != st.dst {
                let ok = path_txs.iter().any(|u| {
                    u.sender == t.receiver
                        && grid.slot(u.slot).is_some()
                        && within(grid.cyclic_distance(t.slot, u.slot))
                });
                if !ok {
                    out.push(v(
                        Proposition::Causality,
                        t.slot,
                        vec![t.sender, t.receiver],
                        format!(
                            "{t}: {} forwards nothing within the following period",
                            t.receiver
                        ),
                    ));
                }
            }
        }
    }

    // (7) single transmission, single path
    let mut owners: BTreeMap<Transmission, Vec<(u16, u8)>> = BTreeMap::new();
    for &(t, s, z) in &valid {
        owners.entry(t).or_default().push((s, z));
    }
    for (t, o) in owners {
        if o.len() > 1 {
            out.push(v(
                Proposition::SinglePath,
                t.slot,
                vec![t.sender, t.receiver],
                format!("{t} shared by {} paths", o.len()),
            ));
        }
    }

    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netconfig::FrameLayout;
    use crate::scheduler::{ScheduledStream, ScheduledTransmission};

    fn sched(streams: Vec<ScheduledStream>, txs: &[(u8, u8, u32, u16, u8)]) -> Schedule {
        let mut s = Schedule::empty(FrameLayout::uniform(1, 4, 0, 25));
        s.superframe_tiles = 1;
        s.streams = streams;
        s.transmissions = txs
            .iter()
            .map(|&(a, b, t, st, z)| ScheduledTransmission {
                tx: Transmission {
                    sender: NodeId(a),
                    receiver: NodeId(b),
                    slot: t,
                },
                stream: st,
                path: z,
            })
            .collect();
        s
    }

    fn stream(src: u8, dst: u8) -> ScheduledStream {
        ScheduledStream {
            id: 0,
            src: NodeId(src),
            dst: NodeId(dst),
            period_ms: 100,
            spatial_redundancy: 1,
            temporal_redundancy: 1,
        }
    }

    fn props(v: &[Violation]) -> Vec<Proposition> {
        v.iter().map(|x| x.proposition).collect()
    }

    #[test]
    fn minimal_relay_is_valid() {
        let g = NetworkGraph::from_edges([(0, 1), (1, 2)]);
        let s = sched(vec![stream(2, 0)], &[(2, 1, 0, 0, 0), (1, 0, 1, 0, 0)]);
        assert!(verify_schedule(&s, &g).is_empty());
    }

    #[test]
    fn relay_in_same_slot_breaks_unique_sender_receiver() {
        let g = NetworkGraph::from_edges([(0, 1), (1, 2)]);
        let s = sched(vec![stream(2, 0)], &[(2, 1, 0, 0, 0), (1, 0, 0, 0, 0)]);
        let v = verify_schedule(&s, &g);
        assert!(props(&v).contains(&Proposition::UniqueSenderReceiver));
        let u = v
            .iter()
            .find(|x| x.proposition == Proposition::UniqueSenderReceiver)
            .unwrap();
        assert_eq!((u.slot, u.nodes.clone()), (0, vec![NodeId(1)]));
    }

    #[test]
    fn cross_edge_breaks_coexistence() {
        let mut g = NetworkGraph::from_edges([(0, 1), (1, 2), (2, 3), (3, 4)]);
        let mk = |g: &NetworkGraph| {
            let s = sched(
                vec![stream(1, 0), stream(3, 4)],
                &[(1, 0, 0, 0, 0), (3, 4, 0, 1, 0)],
            );
            verify_schedule(&s, g)
        };
        assert!(mk(&g).is_empty());
        g.add_edge(NodeId(3), NodeId(0), 1.0);
        assert_eq!(props(&mk(&g)), vec![Proposition::ContemporaryCoexistence]);
    }

    #[test]
    fn orphan_is_spurious() {
        let g = NetworkGraph::from_edges([(0, 1)]);
        let s = sched(vec![stream(1, 0)], &[(1, 0, 0, 0, 0), (1, 0, 2, 3, 0)]);
        assert_eq!(
            props(&verify_schedule(&s, &g)),
            vec![Proposition::NoSpuriousTransmission]
        );
    }

    #[test]
    fn missing_recurrence_breaks_periodicity() {
        let g = NetworkGraph::from_edges([(0, 1)]);
        let mut s = sched(vec![stream(1, 0)], &[(1, 0, 0, 0, 0)]);
        s.superframe_tiles = 2;
        s.layout = FrameLayout::uniform(2, 4, 0, 25);
        assert_eq!(
            props(&verify_schedule(&s, &g)),
            vec![Proposition::Periodicity]
        );
    }

    #[test]
    fn relay_without_incoming_hop_breaks_causality() {
        let g = NetworkGraph::from_edges([(0, 1), (1, 2)]);
        let s = sched(vec![stream(2, 0)], &[(1, 0, 0, 0, 0)]);
        assert_eq!(
            props(&verify_schedule(&s, &g)),
            vec![Proposition::Causality]
        );
        // the cyclic window lets the relay hop precede the source hop
        let s = sched(vec![stream(2, 0)], &[(1, 0, 0, 0, 0), (2, 1, 1, 0, 0)]);
        assert!(verify_schedule(&s, &g).is_empty());
    }

    #[test]
    fn shared_transmission_breaks_single_path() {
        let g = NetworkGraph::from_edges([(0, 1)]);
        let mut st = stream(1, 0);
        st.spatial_redundancy = 2;
        let s = sched(vec![st], &[(1, 0, 0, 0, 0), (1, 0, 0, 0, 1)]);
        assert_eq!(
            props(&verify_schedule(&s, &g)),
            vec![Proposition::SinglePath]
        );
    }
}
