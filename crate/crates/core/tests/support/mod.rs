//! Oracles and fixtures shared by the integration tests and the acceptance
//! harness. Everything here is written against the public API only and
//! avoids reusing the checks it is meant to cross-examine.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tdmh_core::flood::run_flood;
use tdmh_core::netconfig::{uplink_node_for_slot, FrameLayout};
use tdmh_core::scheduler::{
    latency_bounds, schedule_streams, verify_schedule, Proposition, RejectReason, Schedule,
    ScheduledStream, ScheduledTransmission, Stream, StreamState, Transmission,
};
use tdmh_core::topology::{
    build_uplink_message, master_process, process_overheard, ForwardFilter, ForwardQueuePolicy,
    MasterGraphState, NodeTopologyState, TopologyMessage,
};
use tdmh_core::{NetworkConfiguration, NetworkGraph, NodeId};

pub type Links = BTreeSet<(NodeId, NodeId)>;

pub fn links(pairs: &[(u8, u8)]) -> Links {
    pairs
        .iter()
        .map(|&(a, b)| (NodeId(a.min(b)), NodeId(a.max(b))))
        .collect()
}

/// A lossless network running only uplink topology collection.
pub struct UplinkNet {
    pub config: NetworkConfiguration,
    pub graph: NetworkGraph,
    pub nodes: BTreeMap<NodeId, NodeTopologyState>,
    pub master: MasterGraphState,
    pub rng: ChaCha8Rng,
}

impl UplinkNet {
    /// Hops come from one flood; queues are plain FIFO and every record is
    /// forwarded.
    pub fn new(graph: NetworkGraph, config: NetworkConfiguration, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flood = run_flood(&graph, NodeId::MASTER, config.max_hops, &mut rng);
        let mut nodes = BTreeMap::new();
        for n in graph.nodes().filter(|n| !n.is_master()) {
            let mut s = NodeTopologyState::new(n, config.max_nodes)
                .with_queue_policy(ForwardQueuePolicy::Fifo)
                .with_forward_filter(ForwardFilter::All);
            s.set_hop(flood.hop(n));
            nodes.insert(n, s);
        }
        let mut master = MasterGraphState::new(config.max_nodes);
        master.local.set_hop(Some(0));
        UplinkNet {
            config,
            graph,
            nodes,
            master,
            rng,
        }
    }

    /// Runs uplink slot `slot`; returns the message sent, if any.
    pub fn step(&mut self, slot: u64) -> Option<TopologyMessage> {
        let owner = uplink_node_for_slot(slot, self.config.max_nodes);
        let state = self.nodes.get_mut(&owner)?;
        let msg = build_uplink_message(state, slot, &self.config, &mut self.rng).ok()?;
        let hearers: Vec<NodeId> = self.graph.neighbors(owner).collect();
        for h in hearers {
            if h.is_master() {
                master_process(&mut self.master, &msg, slot);
            } else {
                process_overheard(self.nodes.get_mut(&h).unwrap(), &msg, slot);
            }
        }
        Some(msg)
    }

    /// Links known to node `n` (the master's own local knowledge for 0).
    pub fn known(&self, n: u8) -> Links {
        if n == 0 {
            self.master.local.local_links()
        } else {
            self.nodes[&NodeId(n)].local_links()
        }
    }
}

/// The 4-node network of the topology collection example.
pub fn example_graph() -> NetworkGraph {
    NetworkGraph::from_edges([(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)])
}

pub fn example_config() -> NetworkConfiguration {
    NetworkConfiguration {
        max_nodes: 8,
        ..Default::default()
    }
}

/// Random connected graph on `n` nodes: a random spanning tree plus each
/// other pair with probability `density`.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: u8, density: f64) -> NetworkGraph {
    let mut g = NetworkGraph::new();
    g.add_node(NodeId(0));
    for child in 1..n {
        let parent = rng.gen_range(0..child);
        g.add_edge(NodeId(child), NodeId(parent), 1.0);
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(density) {
                g.add_edge(NodeId(a), NodeId(b), 1.0);
            }
        }
    }
    g
}

/// Random stream requests; roughly one in ten asks for a period outside the
/// allowed set.
pub fn random_streams<R: Rng>(rng: &mut R, n: u8, count: usize) -> Vec<Stream> {
    const PERIODS: [u32; 5] = [100, 200, 200, 500, 1000];
    (0..count)
        .map(|i| {
            let src = rng.gen_range(0..n);
            let mut dst = rng.gen_range(0..n - 1);
            if dst >= src {
                dst += 1;
            }
            let period = if rng.gen_bool(0.1) {
                150
            } else {
                PERIODS[rng.gen_range(0..PERIODS.len())]
            };
            Stream::new(
                i as u16,
                src,
                dst,
                period,
                rng.gen_range(1..=2),
                rng.gen_range(1..=3),
            )
        })
        .collect()
}

fn conflicts(g: &NetworkGraph, (i, j): (NodeId, NodeId), (k, l): (NodeId, NodeId)) -> bool {
    // unique sender and receiver
    if k == i || k == j || l == i || l == j {
        return true;
    }
    // contemporary transmission coexistence
    g.has_edge(i, l) || g.has_edge(k, j)
}

/// Checks a rejection against a from-scratch capacity count: the link
/// occupancy left by every earlier scheduled stream and by the stream's own
/// partial placement must leave no slot for the failing hop.
pub fn rejection_is_genuine(
    graph: &NetworkGraph,
    input: &[Stream],
    schedule: &Schedule,
    config: &NetworkConfiguration,
    stream_id: u16,
    reason: &RejectReason,
) -> Result<(), String> {
    let idx = input
        .iter()
        .position(|s| s.id == stream_id)
        .ok_or("unknown stream")?;
    let s = &input[idx];
    match reason {
        RejectReason::InadmissiblePeriod => {
            let ok = config.allowed_periods_ms.contains(&s.period_ms)
                && s.period_ms.is_multiple_of(config.tile_duration_ms);
            if ok {
                return Err(format!(
                    "stream {stream_id}: period {} is admissible",
                    s.period_ms
                ));
            }
            Ok(())
        }
        RejectReason::InvalidRequest => {
            let ok = s.src != s.dst
                && graph.contains_node(s.src)
                && graph.contains_node(s.dst)
                && s.spatial_redundancy > 0
                && s.temporal_redundancy > 0;
            if ok {
                return Err(format!("stream {stream_id}: request is valid"));
            }
            Ok(())
        }
        RejectReason::Unreachable => {
            if graph.bfs_distances(s.src).contains_key(&s.dst) {
                return Err(format!("stream {stream_id}: destination is reachable"));
            }
            Ok(())
        }
        RejectReason::NoCapacity {
            sender,
            receiver,
            after,
            partial,
            ..
        } => {
            // slots are identified by (tile, offset); a replica sits whole
            // periods later at the same offset
            let grid = schedule.grid();
            let sf_tiles = grid.superframe_tiles() as u64;
            let p_tiles = (s.period_ms / config.tile_duration_ms) as u64;
            let slot_at: BTreeMap<(u64, u32), u32> = (0..grid.len() as u32)
                .map(|i| {
                    let d = grid.slot(i).unwrap();
                    ((d.tile as u64, d.offset), i)
                })
                .collect();
            let replicas = |i: u32| -> Option<Vec<u32>> {
                let d = grid.slot(i).unwrap();
                (0..sf_tiles / p_tiles)
                    .map(|r| {
                        slot_at
                            .get(&((d.tile as u64 + r * p_tiles) % sf_tiles, d.offset))
                            .copied()
                    })
                    .collect()
            };

            let earlier: BTreeSet<u16> = input[..idx]
                .iter()
                .filter_map(|e| schedule.streams.iter().position(|x| x.id == e.id))
                .map(|p| p as u16)
                .collect();
            let mut busy: BTreeMap<u32, Vec<(NodeId, NodeId)>> = BTreeMap::new();
            for t in schedule
                .transmissions
                .iter()
                .filter(|t| earlier.contains(&t.stream))
            {
                busy.entry(t.tx.slot)
                    .or_default()
                    .push((t.tx.sender, t.tx.receiver));
            }
            for t in partial {
                for r in replicas(t.slot).ok_or("partial placement has no replica")? {
                    busy.entry(r).or_default().push((t.sender, t.receiver));
                }
            }
            for cand in 0..grid.len() as u32 {
                if grid.slot(cand).unwrap().tile as u64 >= p_tiles
                    || after.is_some_and(|a| cand <= a)
                {
                    continue;
                }
                let Some(reps) = replicas(cand) else { continue };
                let free = reps.iter().all(|r| {
                    busy.get(r).is_none_or(|v| {
                        v.iter()
                            .all(|&o| !conflicts(graph, (*sender, *receiver), o))
                    })
                });
                if free {
                    return Err(format!(
                        "stream {stream_id}: hop {sender}->{receiver} fits in slot {cand}"
                    ));
                }
            }
            Ok(())
        }
    }
}

/// Schedules `streams` and checks every claim the scheduler makes: the
/// schedule verifies clean, each rejection is genuine, each scheduled stream
/// appears, and latency bounds stay within the period.
pub fn check_scheduler_case(
    graph: &NetworkGraph,
    streams: &[Stream],
    config: &NetworkConfiguration,
) -> Result<(), String> {
    let out = schedule_streams(graph, streams, config);
    let v = verify_schedule(&out.schedule, graph);
    if let Some(first) = v.first() {
        return Err(format!("{} violations, first: {first}", v.len()));
    }
    for r in &out.rejections {
        rejection_is_genuine(
            graph,
            streams,
            &out.schedule,
            config,
            r.stream_id,
            &r.reason,
        )?;
    }
    let scheduled = out
        .streams
        .iter()
        .filter(|s| s.state == StreamState::Scheduled)
        .count();
    if scheduled != out.schedule.streams.len() || scheduled + out.rejections.len() != streams.len()
    {
        return Err("stream accounting does not add up".into());
    }
    let bounds = latency_bounds(&out.schedule);
    for s in &out.schedule.streams {
        let b = *bounds
            .get(&s.id)
            .ok_or(format!("no latency bound for stream {}", s.id))?;
        if b > s.period_ms as u64 {
            return Err(format!(
                "stream {} latency {b} ms exceeds period {}",
                s.id, s.period_ms
            ));
        }
    }
    Ok(())
}

/// Direct encoding of the seven schedule propositions over slot start times.
/// Returns the set of propositions the schedule breaks.
pub fn brute_force_verdict(schedule: &Schedule, graph: &NetworkGraph) -> BTreeSet<Proposition> {
    let grid = schedule.grid();
    let sf = grid.superframe_ms();
    let time = |slot: u32| grid.slot(slot).map(|s| s.start_ms);
    let exists = |i: NodeId, j: NodeId, t: u64| {
        schedule
            .transmissions
            .iter()
            .any(|m| m.tx.sender == i && m.tx.receiver == j && time(m.tx.slot) == Some(t))
    };
    // membership in a declared path P(src, dst, p, z)
    let in_path = |m: &ScheduledTransmission| {
        schedule
            .streams
            .get(m.stream as usize)
            .is_some_and(|s| m.path < s.spatial_redundancy)
    };
    let mut bad = BTreeSet::new();

    for m in &schedule.transmissions {
        let Transmission {
            sender: i,
            receiver: j,
            slot,
        } = m.tx;
        let Some(t) = time(slot) else {
            bad.insert(Proposition::NoSpuriousTransmission);
            continue;
        };
        if !graph.has_edge(i, j) {
            bad.insert(Proposition::Connectivity);
        }
        for o in &schedule.transmissions {
            if time(o.tx.slot) != Some(t) || o.tx == m.tx {
                continue;
            }
            let (k, l) = (o.tx.sender, o.tx.receiver);
            // T(u,i,t), T(i,l,t) with l != j, T(k,j,t) with k != i, T(j,v,t)
            if l == i || (k == i && l != j) || (l == j && k != i) || k == j {
                bad.insert(Proposition::UniqueSenderReceiver);
            }
            if i != k && j != l && (graph.has_edge(i, l) || graph.has_edge(k, j)) {
                bad.insert(Proposition::ContemporaryCoexistence);
            }
        }
        let paths_of_t: BTreeSet<(u16, u8)> = schedule
            .transmissions
            .iter()
            .filter(|o| o.tx == m.tx && in_path(o))
            .map(|o| (o.stream, o.path))
            .collect();
        if paths_of_t.is_empty() {
            bad.insert(Proposition::NoSpuriousTransmission);
        }
        if paths_of_t.len() > 1 {
            bad.insert(Proposition::SinglePath);
        }
        if !in_path(m) {
            continue;
        }
        let st: &ScheduledStream = &schedule.streams[m.stream as usize];
        let p = st.period_ms as u64;
        if !exists(i, j, (t + p) % sf) {
            bad.insert(Proposition::Periodicity);
        }
        let same_path: Vec<(NodeId, NodeId, u64)> = schedule
            .transmissions
            .iter()
            .filter(|o| o.stream == m.stream && o.path == m.path)
            .filter_map(|o| time(o.tx.slot).map(|x| (o.tx.sender, o.tx.receiver, x)))
            .collect();
        let forward = |x: u64| {
            let d = (x + sf - t) % sf;
            d > 0 && d < p
        };
        let backward = |x: u64| {
            let d = (t + sf - x) % sf;
            d > 0 && d < p
        };
        let has_next = same_path.iter().any(|&(a, _, x)| a == j && forward(x));
        let has_prev = same_path.iter().any(|&(_, b, x)| b == i && backward(x));
        let k = st.src;
        let l = st.dst;
        let causal = (k == i && l == j)
            || (k == i && has_next)
            || (l == j && has_prev)
            || (has_next && has_prev);
        if !causal {
            bad.insert(Proposition::Causality);
        }
    }
    bad
}

pub fn verifier_verdict(schedule: &Schedule, graph: &NetworkGraph) -> BTreeSet<Proposition> {
    verify_schedule(schedule, graph)
        .into_iter()
        .map(|v| v.proposition)
        .collect()
}

/// One family of exhaustive cases: a graph, a frame geometry and a stream.
pub struct ExhaustiveFamily {
    pub graph: NetworkGraph,
    pub nodes: u8,
    pub tiles: u32,
    pub slots_per_tile: u32,
    pub period_tiles: u32,
    pub spatial: u8,
}

/// Every connected graph shape on 3 and 4 nodes, crossed with frame
/// geometries of at most 4 data slots and one stream with 1 or 2 paths.
pub fn exhaustive_families() -> Vec<ExhaustiveFamily> {
    let shapes: Vec<(u8, Vec<(u8, u8)>)> = vec![
        (3, vec![(0, 1), (1, 2)]),
        (3, vec![(0, 1), (1, 2), (0, 2)]),
        (4, vec![(0, 1), (1, 2), (2, 3)]),
        (4, vec![(0, 1), (0, 2), (0, 3)]),
        (4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]),
        (4, vec![(0, 1), (1, 2), (2, 0), (2, 3)]),
        (4, vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]),
        (4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),
    ];
    let geometries = [(1, 4, 1), (2, 2, 1), (2, 2, 2), (4, 1, 2)];
    let mut out = Vec::new();
    for (n, edges) in &shapes {
        for &(tiles, slots_per_tile, period_tiles) in &geometries {
            for spatial in 1..=2 {
                out.push(ExhaustiveFamily {
                    graph: NetworkGraph::from_edges(edges.iter().copied()),
                    nodes: *n,
                    tiles,
                    slots_per_tile,
                    period_tiles,
                    spatial,
                });
            }
        }
    }
    out
}

/// Compares the verifier with [`brute_force_verdict`] on every schedule of
/// the family with at most `max_tx` tagged transmissions, each drawn from
/// all (sender, receiver, slot, path index in {0, 1}). Returns the number of
/// schedules checked and the first few disagreements.
pub fn compare_family(f: &ExhaustiveFamily, max_tx: usize) -> (u64, Vec<String>) {
    const SLOT_MS: u32 = 10;
    let layout = FrameLayout::uniform(f.tiles as usize, f.slots_per_tile, 0, SLOT_MS);
    let mut base = Schedule::empty(layout.clone());
    base.superframe_tiles = f.tiles;
    base.streams = vec![ScheduledStream {
        id: 0,
        src: NodeId(f.nodes - 1),
        dst: NodeId(0),
        period_ms: f.period_tiles * layout.tile_ms,
        spatial_redundancy: f.spatial,
        temporal_redundancy: 1,
    }];
    let slots = f.tiles * f.slots_per_tile;
    let mut elems = Vec::new();
    for a in 0..f.nodes {
        for b in 0..f.nodes {
            if a == b {
                continue;
            }
            for slot in 0..slots {
                for path in 0..2u8 {
                    elems.push(ScheduledTransmission {
                        tx: Transmission {
                            sender: NodeId(a),
                            receiver: NodeId(b),
                            slot,
                        },
                        stream: 0,
                        path,
                    });
                }
            }
        }
    }

    let mut checked = 0u64;
    let mut mismatches = Vec::new();
    let mut pick: Vec<usize> = Vec::new();
    let mut sched = base.clone();
    // enumerate increasing index combinations of size 0..=max_tx
    loop {
        sched.transmissions.clear();
        sched.transmissions.extend(pick.iter().map(|&i| elems[i]));
        let got = verifier_verdict(&sched, &f.graph);
        let want = brute_force_verdict(&sched, &f.graph);
        checked += 1;
        if got != want && mismatches.len() < 5 {
            mismatches.push(format!(
                "{:?}: verifier {got:?}, oracle {want:?}",
                sched.transmissions
            ));
        }
        // next combination
        if pick.len() < max_tx && pick.last().map_or(0, |&l| l + 1) < elems.len() {
            pick.push(pick.last().map_or(0, |&l| l + 1));
            continue;
        }
        loop {
            match pick.pop() {
                None => return (checked, mismatches),
                Some(last) if last + 1 < elems.len() => {
                    pick.push(last + 1);
                    break;
                }
                Some(_) => {}
            }
        }
    }
}
