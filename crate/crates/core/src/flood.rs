//! Abstracted constructive-interference floods.
//!
//! A flood is modeled as a breadth-first wave from the initiator. All nodes
//! that received the frame in wave `k - 1` rebroadcast it together in wave `k`;
//! concurrent identical frames reinforce, so a listener receives iff at least
//! one of the per-link Bernoulli trials from its transmitting neighbors
//! succeeds. The wave index is the hop count each receiver learns.

use std::collections::BTreeMap;

use rand::Rng;

use crate::netconfig::{NetworkConfiguration, TileKind};
use crate::{NetworkGraph, NodeId};

/// Synchronization frame payload: a counter incremented every sync period,
/// plus the flood hop counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncFrame {
    pub counter: u32,
    pub hop_counter: u8,
}

/// Global network time in milliseconds for a given sync counter.
pub fn global_time(counter: u32, sync_period_ms: u32) -> u64 {
    counter as u64 * sync_period_ms as u64
}

/// Hop count learned by each node reached by a flood. The initiator has hop 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FloodOutcome {
    hops: BTreeMap<NodeId, u8>,
}

impl FloodOutcome {
    pub fn received(&self, n: NodeId) -> bool {
        self.hops.contains_key(&n)
    }

    pub fn hop(&self, n: NodeId) -> Option<u8> {
        self.hops.get(&n).copied()
    }

    /// `(node, hop)` pairs in node order, initiator included.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, u8)> + '_ {
        self.hops.iter().map(|(&n, &h)| (n, h))
    }

    /// Number of nodes reached, initiator included.
    pub fn reach(&self) -> usize {
        self.hops.len()
    }
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.gen::<f64>() < p
}

/// Floods `graph` from `initiator` for at most `max_hops` waves.
pub fn run_flood<R: Rng + ?Sized>(
    graph: &NetworkGraph,
    initiator: NodeId,
    max_hops: u32,
    rng: &mut R,
) -> FloodOutcome {
    let mut hops = BTreeMap::new();
    if !graph.contains_node(initiator) {
        return FloodOutcome { hops };
    }
    hops.insert(initiator, 0u8);
    let mut senders = vec![initiator];
    let max_waves = max_hops.min(u8::MAX as u32) as u8;
    for wave in 1..=max_waves {
        // listeners in id order, each trying its transmitting neighbors in id order
        let mut listeners: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for &s in &senders {
            for n in graph.neighbors(s) {
                if !hops.contains_key(&n) {
                    listeners.entry(n).or_default().push(s);
                }
            }
        }
        let mut next = Vec::new();
        for (n, mut from) in listeners {
            from.sort_unstable();
            let mut got = false;
            for s in from {
                let p = graph.reliability(s, n).unwrap_or(0.0);
                got |= bernoulli(rng, p);
            }
            if got {
                next.push(n);
            }
        }
        if next.is_empty() {
            break;
        }
        for &n in &next {
            hops.insert(n, wave);
        }
        senders = next;
    }
    FloodOutcome { hops }
}

/// A schedule as carried by downlink floods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulePacket {
    pub schedule_id: u32,
    pub activation_tile: u64,
    pub body: Vec<u8>,
}

/// Floods `packet` `repetitions` times from the master. A node holds the
/// schedule iff at least one repetition reached it.
pub fn disseminate_schedule<R: Rng + ?Sized>(
    graph: &NetworkGraph,
    packet: &SchedulePacket,
    repetitions: u32,
    max_hops: u32,
    rng: &mut R,
) -> BTreeMap<NodeId, bool> {
    let _ = packet;
    let mut holds: BTreeMap<NodeId, bool> = graph.nodes().map(|n| (n, false)).collect();
    for _ in 0..repetitions {
        let out = run_flood(graph, NodeId::MASTER, max_hops, rng);
        for (n, _) in out.iter() {
            holds.insert(n, true);
        }
    }
    holds
}

/// Whether the downlink tile `tile` carries a clock synchronization flood.
///
/// The first downlink tile starting in each sync period is a sync tile.
pub fn is_sync_tile(config: &NetworkConfiguration, tile: u64) -> bool {
    if config.tile_kind(tile) != TileKind::Downlink {
        return false;
    }
    let period = config.sync_period_ms.max(1) as u64;
    let tile_ms = config.tile_duration_ms as u64;
    let this = tile * tile_ms / period;
    let prev = (0..tile)
        .rev()
        .take(config.control_superframe.len())
        .find(|&t| config.tile_kind(t) == TileKind::Downlink);
    match prev {
        None => true,
        Some(p) => p * tile_ms / period != this,
    }
}

/// Sync counter value carried by a sync flood at `tile`.
pub fn sync_counter(config: &NetworkConfiguration, tile: u64) -> u32 {
    (tile * config.tile_duration_ms as u64 / config.sync_period_ms.max(1) as u64) as u32
}

/// Downlink tiles used to flood a new schedule and the tile it takes effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisseminationPlan {
    pub flood_tiles: Vec<u64>,
    pub activation_tile: u64,
}

/// Plans `schedule_repetitions` floods in the non-sync downlink tiles starting
/// at `from_tile`; activation is the first control superframe boundary after
/// the last repetition.
pub fn plan_dissemination(config: &NetworkConfiguration, from_tile: u64) -> DisseminationPlan {
    let mut flood_tiles = Vec::new();
    let mut t = from_tile;
    while flood_tiles.len() < config.schedule_repetitions as usize {
        if config.tile_kind(t) == TileKind::Downlink && !is_sync_tile(config, t) {
            flood_tiles.push(t);
        }
        t += 1;
    }
    let len = config.control_superframe.len() as u64;
    let last = *flood_tiles.last().unwrap_or(&from_tile);
    let activation_tile = (last / len + 1) * len;
    DisseminationPlan {
        flood_tiles,
        activation_tile,
    }
}
