//! Round-robin topology collection.
//!
//! In its uplink slot a node broadcasts its id, hop, chosen forwardee and a
//! bitmask of its direct neighbors, followed by topology records it was asked
//! to forward and any pending stream management elements. Only direct
//! neighbors hear the frame. Each of them learns the sender as a neighbor and
//! merges its bitmask; the chosen forwardee (always a node with a lower hop)
//! also queues the sender's record and its forwarded records, so every hand-off
//! moves a record one hop closer to the master.
//!
//! # Uplink message layout
//!
//! All multi-byte integers are little-endian. `B = ceil(max_nodes / 8)`.
//!
//! | bytes        | field                                                   |
//! |--------------|---------------------------------------------------------|
//! | 1            | node id                                                 |
//! | 1            | hop                                                     |
//! | 1            | forwardee id                                            |
//! | 1            | forwarded record count `F`                              |
//! | B            | neighbor bitmask (bit `n` is byte `n / 8`, bit `n % 8`) |
//! | F × (1 + B)  | forwarded records: node id then bitmask                 |
//! | 1            | SME count `S`                                           |
//! | S × 9        | SMEs: src, dst, period_ms (u32), spatial, temporal, action (0 open, 1 close) |

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use thiserror::Error;

use crate::netconfig::{uplink_node_for_slot, NetworkConfiguration};
use crate::scheduler::{SmeAction, StreamManagementElement};
use crate::{NetworkGraph, NodeId};

/// Encoded size of one stream management element.
pub const SME_BYTES: usize = 9;

/// Fixed bit array with one bit per possible node id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NeighborBitmask {
    bits: Vec<u8>,
    max_nodes: u32,
}

impl NeighborBitmask {
    pub fn new(max_nodes: u32) -> Self {
        NeighborBitmask {
            bits: vec![0; Self::byte_len(max_nodes)],
            max_nodes,
        }
    }

    pub fn byte_len(max_nodes: u32) -> usize {
        (max_nodes as usize).div_ceil(8)
    }

    pub fn from_nodes<I: IntoIterator<Item = NodeId>>(max_nodes: u32, nodes: I) -> Self {
        let mut m = Self::new(max_nodes);
        for n in nodes {
            m.set(n);
        }
        m
    }

    pub fn set(&mut self, n: NodeId) {
        if (n.0 as u32) < self.max_nodes {
            self.bits[n.index() / 8] |= 1 << (n.0 % 8);
        }
    }

    pub fn clear(&mut self, n: NodeId) {
        if (n.0 as u32) < self.max_nodes {
            self.bits[n.index() / 8] &= !(1 << (n.0 % 8));
        }
    }

    pub fn contains(&self, n: NodeId) -> bool {
        (n.0 as u32) < self.max_nodes && self.bits[n.index() / 8] & (1 << (n.0 % 8)) != 0
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.max_nodes)
            .map(|i| NodeId(i as u8))
            .filter(|&n| self.contains(n))
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|b| *b == 0)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    fn from_bytes(bytes: &[u8], max_nodes: u32) -> Result<Self, CodecError> {
        let m = NeighborBitmask {
            bits: bytes.to_vec(),
            max_nodes,
        };
        let used = max_nodes as usize;
        let padding = m.bits.len() * 8 - used;
        if padding > 0 && m.bits[m.bits.len() - 1] >> (8 - padding) != 0 {
            return Err(CodecError::Malformed("bitmask padding bits set".into()));
        }
        Ok(m)
    }
}

/// A topology record being carried towards the master on behalf of another node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardedTopology {
    pub node_id: NodeId,
    pub neighbors: NeighborBitmask,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyMessage {
    pub node_id: NodeId,
    pub hop: u8,
    pub forwardee: NodeId,
    pub neighbors: NeighborBitmask,
    pub forwarded: Vec<ForwardedTopology>,
    pub smes: Vec<StreamManagementElement>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("uplink slot belongs to node {owner}, not {node}")]
    NotMyTurn { node: NodeId, owner: NodeId },
    #[error("node {0} has not received a flood yet and has no hop")]
    NoHop(NodeId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("encoded message is {size} bytes, budget is {budget}")]
    Oversize { size: usize, budget: usize },
    #[error("malformed message: {0}")]
    Malformed(String),
}

/// How a forwardee queues records for nodes that already have one queued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForwardQueuePolicy {
    /// Plain FIFO; duplicates for the same node are all kept.
    Fifo,
    /// FIFO keyed by node id: a newer record replaces the queued one in place.
    #[default]
    UpdateInPlace,
}

/// Which records a forwardee accepts into its queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardFilter {
    /// Every record heard from a node that picked us, every time.
    All,
    /// Only records whose bitmask differs from the last one accepted for that
    /// node, or unchanged ones last accepted at least `refresh_slots` uplink
    /// slots ago. `None` never refreshes.
    Changed { refresh_slots: Option<u64> },
}

impl Default for ForwardFilter {
    fn default() -> Self {
        ForwardFilter::Changed {
            refresh_slots: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborInfo {
    pub hop: Option<u8>,
    /// Uplink slot index of the last overheard message.
    pub last_seen: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportedTopology {
    pub neighbors: NeighborBitmask,
    pub last_seen: u64,
}

/// Local knowledge of one node.
#[derive(Debug, Clone)]
pub struct NodeTopologyState {
    pub my_id: NodeId,
    pub my_hop: Option<u8>,
    max_nodes: u32,
    neighbors: BTreeMap<NodeId, NeighborInfo>,
    reports: BTreeMap<NodeId, ReportedTopology>,
    forward_queue: VecDeque<ForwardedTopology>,
    pending_smes: VecDeque<StreamManagementElement>,
    own_smes: Vec<StreamManagementElement>,
    queue_policy: ForwardQueuePolicy,
    forward_filter: ForwardFilter,
    forwardee: Option<NodeId>,
    last_forwarded: BTreeMap<NodeId, (NeighborBitmask, u64)>,
}

impl NodeTopologyState {
    pub fn new(my_id: NodeId, max_nodes: u32) -> Self {
        NodeTopologyState {
            my_id,
            my_hop: None,
            max_nodes,
            neighbors: BTreeMap::new(),
            reports: BTreeMap::new(),
            forward_queue: VecDeque::new(),
            pending_smes: VecDeque::new(),
            own_smes: Vec::new(),
            queue_policy: ForwardQueuePolicy::default(),
            forward_filter: ForwardFilter::default(),
            forwardee: None,
            last_forwarded: BTreeMap::new(),
        }
    }

    pub fn with_queue_policy(mut self, policy: ForwardQueuePolicy) -> Self {
        self.queue_policy = policy;
        self
    }

    pub fn with_forward_filter(mut self, filter: ForwardFilter) -> Self {
        self.forward_filter = filter;
        self
    }

    pub fn max_nodes(&self) -> u32 {
        self.max_nodes
    }

    /// Records the hop learned from the latest flood.
    pub fn set_hop(&mut self, hop: Option<u8>) {
        self.my_hop = hop;
    }

    /// Direct neighbors: every overheard node, plus the master when the last
    /// flood was received directly from it (hop 1).
    pub fn own_neighbors(&self) -> BTreeSet<NodeId> {
        let mut out: BTreeSet<NodeId> = self.neighbors.keys().copied().collect();
        if self.my_hop == Some(1) && !self.my_id.is_master() {
            out.insert(NodeId::MASTER);
        }
        out.remove(&self.my_id);
        out
    }

    pub fn neighbor_bitmask(&self) -> NeighborBitmask {
        NeighborBitmask::from_nodes(self.max_nodes, self.own_neighbors())
    }

    pub fn neighbor_info(&self, n: NodeId) -> Option<&NeighborInfo> {
        self.neighbors.get(&n)
    }

    /// All links this node knows of: its own adjacency plus every overheard
    /// neighbor bitmask. Pairs are ordered `(low, high)`.
    pub fn local_links(&self) -> BTreeSet<(NodeId, NodeId)> {
        let mut links = BTreeSet::new();
        let mut add = |a: NodeId, b: NodeId| {
            if a != b {
                links.insert((a.min(b), a.max(b)));
            }
        };
        for n in self.own_neighbors() {
            add(self.my_id, n);
        }
        for (&owner, rep) in &self.reports {
            for n in rep.neighbors.iter() {
                add(owner, n);
            }
        }
        links
    }

    pub fn forward_queue(&self) -> impl Iterator<Item = &ForwardedTopology> {
        self.forward_queue.iter()
    }

    pub fn forward_queue_len(&self) -> usize {
        self.forward_queue.len()
    }

    pub fn pending_smes(&self) -> impl Iterator<Item = &StreamManagementElement> {
        self.own_smes.iter().chain(self.pending_smes.iter())
    }

    /// Queues a stream request originated by this node. It is re-sent in
    /// every uplink turn until [`Self::acknowledge_sme`] is called.
    pub fn request_stream(&mut self, sme: StreamManagementElement) {
        self.own_smes
            .retain(|s| !(s.src == sme.src && s.dst == sme.dst));
        self.own_smes.push(sme);
    }

    pub fn acknowledge_sme(&mut self, src: NodeId, dst: NodeId, action: SmeAction) {
        self.own_smes
            .retain(|s| !(s.src == src && s.dst == dst && s.action == action));
    }

    /// Candidate forwardees: known neighbors with a strictly lower hop.
    pub fn forwardee_candidates(&self) -> Vec<NodeId> {
        let Some(my_hop) = self.my_hop else {
            return Vec::new();
        };
        let mut out: Vec<NodeId> = self
            .neighbors
            .iter()
            .filter(|(n, info)| **n != self.my_id && info.hop.is_some_and(|h| h < my_hop))
            .map(|(n, _)| *n)
            .collect();
        if my_hop == 1 && !out.contains(&NodeId::MASTER) {
            out.insert(0, NodeId::MASTER);
        }
        out
    }

    fn accept_forward(&mut self, rec: ForwardedTopology, now: u64) {
        if let ForwardFilter::Changed { refresh_slots } = self.forward_filter {
            if let Some((b, t)) = self.last_forwarded.get(&rec.node_id) {
                if *b == rec.neighbors && refresh_slots.is_none_or(|r| now.saturating_sub(*t) < r) {
                    return;
                }
            }
            self.last_forwarded
                .insert(rec.node_id, (rec.neighbors.clone(), now));
        }
        self.enqueue(rec);
    }

    fn enqueue(&mut self, rec: ForwardedTopology) {
        if self.queue_policy == ForwardQueuePolicy::UpdateInPlace {
            if let Some(slot) = self
                .forward_queue
                .iter_mut()
                .find(|r| r.node_id == rec.node_id)
            {
                *slot = rec;
                return;
            }
        }
        self.forward_queue.push_back(rec);
    }
}

/// Fixed part of an uplink message: header, own bitmask and the SME count.
pub fn message_overhead_bytes(max_nodes: u32) -> usize {
    4 + NeighborBitmask::byte_len(max_nodes) + 1
}

/// Number of forwarded records that fit next to the fixed part.
pub fn forward_capacity(config: &NetworkConfiguration) -> usize {
    let b = NeighborBitmask::byte_len(config.max_nodes);
    let free = config
        .uplink_budget_bytes()
        .saturating_sub(message_overhead_bytes(config.max_nodes));
    (free / (1 + b)).min(u8::MAX as usize)
}

/// Builds the message `state`'s node sends in uplink slot `slot_index`.
///
/// The forwardee is drawn uniformly among neighbors with a lower hop; with no
/// such neighbor the node names itself and nothing is forwarded. Up to
/// [`forward_capacity`] queued records are popped in FIFO order, then SMEs
/// are attached while the encoded size fits the uplink budget.
pub fn build_uplink_message<R: Rng + ?Sized>(
    state: &mut NodeTopologyState,
    slot_index: u64,
    config: &NetworkConfiguration,
    rng: &mut R,
) -> Result<TopologyMessage, TopologyError> {
    let owner = uplink_node_for_slot(slot_index, config.max_nodes);
    if owner != state.my_id {
        return Err(TopologyError::NotMyTurn {
            node: state.my_id,
            owner,
        });
    }
    let hop = state.my_hop.ok_or(TopologyError::NoHop(state.my_id))?;
    let candidates = state.forwardee_candidates();
    // The random choice sticks until the forwardee stops being a lower-hop
    // neighbor, so each record waits in a single queue.
    let forwardee = match state.forwardee {
        Some(f) if candidates.contains(&f) => f,
        _ if candidates.is_empty() => state.my_id,
        _ => candidates[rng.gen_range(0..candidates.len())],
    };
    state.forwardee = (forwardee != state.my_id).then_some(forwardee);

    let mut msg = TopologyMessage {
        node_id: state.my_id,
        hop,
        forwardee,
        neighbors: state.neighbor_bitmask(),
        forwarded: Vec::new(),
        smes: Vec::new(),
    };
    if forwardee == state.my_id {
        return Ok(msg);
    }

    let capacity = forward_capacity(config);
    while msg.forwarded.len() < capacity {
        match state.forward_queue.pop_front() {
            Some(rec) => msg.forwarded.push(rec),
            None => break,
        }
    }
    let b = NeighborBitmask::byte_len(config.max_nodes);
    let mut size = message_overhead_bytes(config.max_nodes) + msg.forwarded.len() * (1 + b);
    let budget = config.uplink_budget_bytes();
    let own = state.own_smes.iter().cloned();
    for sme in own {
        if size + SME_BYTES > budget || msg.smes.len() == u8::MAX as usize {
            break;
        }
        size += SME_BYTES;
        msg.smes.push(sme);
    }
    while size + SME_BYTES <= budget && msg.smes.len() < u8::MAX as usize {
        match state.pending_smes.pop_front() {
            Some(sme) => {
                size += SME_BYTES;
                msg.smes.push(sme);
            }
            None => break,
        }
    }
    Ok(msg)
}

/// Updates a node's knowledge with a message it overheard in uplink slot `now`.
pub fn process_overheard(state: &mut NodeTopologyState, msg: &TopologyMessage, now: u64) {
    if msg.node_id == state.my_id {
        return;
    }
    state.neighbors.insert(
        msg.node_id,
        NeighborInfo {
            hop: Some(msg.hop),
            last_seen: now,
        },
    );
    let mut reported = msg.neighbors.clone();
    reported.clear(msg.node_id);
    state.reports.insert(
        msg.node_id,
        ReportedTopology {
            neighbors: reported,
            last_seen: now,
        },
    );
    if msg.forwardee == state.my_id && !state.my_id.is_master() {
        state.accept_forward(
            ForwardedTopology {
                node_id: msg.node_id,
                neighbors: msg.neighbors.clone(),
            },
            now,
        );
        for rec in &msg.forwarded {
            state.accept_forward(rec.clone(), now);
        }
        state.pending_smes.extend(msg.smes.iter().cloned());
    }
}

/// Drops neighbors and reported bitmasks not overheard for `window` uplink
/// slots (the expiry round count times the slots per round).
pub fn expire_stale(state: &mut NodeTopologyState, now: u64, window: u64) -> Vec<NodeId> {
    let stale: Vec<NodeId> = state
        .neighbors
        .iter()
        .filter(|(_, i)| now.saturating_sub(i.last_seen) >= window)
        .map(|(n, _)| *n)
        .collect();
    for n in &stale {
        state.neighbors.remove(n);
    }
    state
        .reports
        .retain(|_, r| now.saturating_sub(r.last_seen) < window);
    stale
}

/// Expiry window in uplink slots for a configuration.
pub fn expiry_window(config: &NetworkConfiguration) -> u64 {
    config.topology_expiry_rounds as u64 * config.slots_per_round()
}

/// The master's view of the network.
///
/// Links to the master come from what the master itself overhears. Every
/// other link is set by the most recent record of either endpoint: receiving
/// node `u`'s bitmask replaces all of `u`'s links.
#[derive(Debug, Clone)]
pub struct MasterGraphState {
    pub local: NodeTopologyState,
    edges: BTreeSet<(NodeId, NodeId)>,
    smes: Vec<StreamManagementElement>,
}

impl MasterGraphState {
    pub fn new(max_nodes: u32) -> Self {
        MasterGraphState {
            local: NodeTopologyState::new(NodeId::MASTER, max_nodes),
            edges: BTreeSet::new(),
            smes: Vec::new(),
        }
    }

    fn integrate(&mut self, node: NodeId, neighbors: &NeighborBitmask) {
        if node.is_master() {
            return;
        }
        self.edges.retain(|&(a, b)| a != node && b != node);
        for n in neighbors.iter() {
            if n != node && !n.is_master() {
                self.edges.insert((n.min(node), n.max(node)));
            }
        }
    }

    /// Connected view rooted at the master. Records about nodes that no
    /// longer connect to the master are retained but not shown.
    pub fn graph(&self) -> NetworkGraph {
        let mut g = NetworkGraph::new();
        g.add_node(NodeId::MASTER);
        for n in self.local.neighbors.keys() {
            g.add_edge(NodeId::MASTER, *n, 1.0);
        }
        for &(a, b) in &self.edges {
            g.add_edge(a, b, 1.0);
        }
        g.component_of(NodeId::MASTER)
    }

    /// Drains SMEs received since the last call.
    pub fn take_smes(&mut self) -> Vec<StreamManagementElement> {
        std::mem::take(&mut self.smes)
    }
}

/// Integrates a message overheard by the master in uplink slot `now`.
pub fn master_process(state: &mut MasterGraphState, msg: &TopologyMessage, now: u64) {
    process_overheard(&mut state.local, msg, now);
    state.integrate(msg.node_id, &msg.neighbors);
    for rec in &msg.forwarded {
        state.integrate(rec.node_id, &rec.neighbors);
    }
    if msg.forwardee.is_master() {
        state.smes.extend(msg.smes.iter().cloned());
    }
}

/// Expires the master's own neighbors; returns the ones dropped.
pub fn master_expire_stale(state: &mut MasterGraphState, now: u64, window: u64) -> Vec<NodeId> {
    expire_stale(&mut state.local, now, window)
}

fn encode_sme(sme: &StreamManagementElement, out: &mut Vec<u8>) {
    out.push(sme.src.0);
    out.push(sme.dst.0);
    out.extend_from_slice(&sme.period_ms.to_le_bytes());
    out.push(sme.spatial_redundancy);
    out.push(sme.temporal_redundancy);
    out.push(match sme.action {
        SmeAction::Open => 0,
        SmeAction::Close => 1,
    });
}

/// Serializes a message; fails if it exceeds the uplink budget.
pub fn encode(msg: &TopologyMessage, config: &NetworkConfiguration) -> Result<Vec<u8>, CodecError> {
    let b = NeighborBitmask::byte_len(config.max_nodes);
    let size = message_overhead_bytes(config.max_nodes)
        + msg.forwarded.len() * (1 + b)
        + msg.smes.len() * SME_BYTES;
    let budget = config.uplink_budget_bytes();
    if size > budget || msg.forwarded.len() > u8::MAX as usize || msg.smes.len() > u8::MAX as usize
    {
        return Err(CodecError::Oversize { size, budget });
    }
    let mut out = Vec::with_capacity(size);
    out.extend_from_slice(&[
        msg.node_id.0,
        msg.hop,
        msg.forwardee.0,
        msg.forwarded.len() as u8,
    ]);
    out.extend_from_slice(&fit_mask(&msg.neighbors, b));
    for rec in &msg.forwarded {
        out.push(rec.node_id.0);
        out.extend_from_slice(&fit_mask(&rec.neighbors, b));
    }
    out.push(msg.smes.len() as u8);
    for sme in &msg.smes {
        encode_sme(sme, &mut out);
    }
    Ok(out)
}

fn fit_mask(m: &NeighborBitmask, len: usize) -> Vec<u8> {
    let mut v = m.as_bytes().to_vec();
    v.resize(len, 0);
    v
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.buf.len() {
            return Err(CodecError::Malformed(format!(
                "truncated at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
}

/// Parses a message produced by [`encode`].
pub fn decode(bytes: &[u8], config: &NetworkConfiguration) -> Result<TopologyMessage, CodecError> {
    let max = config.max_nodes;
    let b = NeighborBitmask::byte_len(max);
    let mut r = Reader { buf: bytes, pos: 0 };
    let node = |v: u8| -> Result<NodeId, CodecError> {
        if (v as u32) < max {
            Ok(NodeId(v))
        } else {
            Err(CodecError::Malformed(format!("node id {v} out of range")))
        }
    };
    let node_id = node(r.u8()?)?;
    let hop = r.u8()?;
    if hop == 0 {
        return Err(CodecError::Malformed("hop 0 in uplink message".into()));
    }
    let forwardee = node(r.u8()?)?;
    let n_fwd = r.u8()? as usize;
    let neighbors = NeighborBitmask::from_bytes(r.take(b)?, max)?;
    if neighbors.contains(node_id) {
        return Err(CodecError::Malformed(
            "node lists itself as neighbor".into(),
        ));
    }
    let mut forwarded = Vec::with_capacity(n_fwd);
    for _ in 0..n_fwd {
        let id = node(r.u8()?)?;
        let mask = NeighborBitmask::from_bytes(r.take(b)?, max)?;
        forwarded.push(ForwardedTopology {
            node_id: id,
            neighbors: mask,
        });
    }
    let n_sme = r.u8()? as usize;
    let mut smes = Vec::with_capacity(n_sme);
    for _ in 0..n_sme {
        let raw = r.take(SME_BYTES)?;
        let action = match raw[8] {
            0 => SmeAction::Open,
            1 => SmeAction::Close,
            a => return Err(CodecError::Malformed(format!("unknown SME action {a}"))),
        };
        smes.push(StreamManagementElement {
            src: node(raw[0])?,
            dst: node(raw[1])?,
            period_ms: u32::from_le_bytes([raw[2], raw[3], raw[4], raw[5]]),
            spatial_redundancy: raw[6],
            temporal_redundancy: raw[7],
            action,
        });
    }
    if r.pos != bytes.len() {
        return Err(CodecError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(TopologyMessage {
        node_id,
        hop,
        forwardee,
        neighbors,
        forwarded,
        smes,
    })
}

/// Writes a graph as `u v reliability` lines.
pub fn write_edge_list(graph: &NetworkGraph) -> String {
    let mut s = String::new();
    for (u, v, r) in graph.edges() {
        s.push_str(&format!("{u} {v} {r}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg8() -> NetworkConfiguration {
        NetworkConfiguration {
            max_nodes: 8,
            ..Default::default()
        }
    }

    fn ids(it: impl IntoIterator<Item = NodeId>) -> Vec<u8> {
        it.into_iter().map(|n| n.0).collect()
    }

    #[test]
    fn bitmask_size_follows_max_nodes() {
        assert_eq!(NeighborBitmask::new(32).as_bytes().len(), 4);
        assert_eq!(NeighborBitmask::new(33).as_bytes().len(), 5);
        assert_eq!(NeighborBitmask::new(8).as_bytes().len(), 1);
    }

    #[test]
    fn node_without_lower_hop_names_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = NodeTopologyState::new(NodeId(3), 8);
        s.set_hop(Some(2));
        // slot 4 of a round with max_nodes 8 belongs to node 3
        let m = build_uplink_message(&mut s, 4, &cfg8(), &mut rng).unwrap();
        assert_eq!((m.node_id, m.hop, m.forwardee), (NodeId(3), 2, NodeId(3)));
        assert!(m.neighbors.is_empty() && m.forwarded.is_empty());
    }

    #[test]
    fn hop_one_node_forwards_to_master() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = NodeTopologyState::new(NodeId(2), 8);
        s.set_hop(Some(1));
        for _ in 0..20 {
            let m = build_uplink_message(&mut s, 5, &cfg8(), &mut rng).unwrap();
            assert_eq!(m.forwardee, NodeId(0));
            assert_eq!(ids(m.neighbors.iter()), vec![0]);
        }
    }

    #[test]
    fn wrong_slot_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = NodeTopologyState::new(NodeId(2), 8);
        s.set_hop(Some(1));
        let e = build_uplink_message(&mut s, 0, &cfg8(), &mut rng).unwrap_err();
        assert_eq!(
            e,
            TopologyError::NotMyTurn {
                node: NodeId(2),
                owner: NodeId(7)
            }
        );
    }

    #[test]
    fn node_without_hop_abstains() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = NodeTopologyState::new(NodeId(2), 8);
        assert_eq!(
            build_uplink_message(&mut s, 5, &cfg8(), &mut rng),
            Err(TopologyError::NoHop(NodeId(2)))
        );
    }

    fn msg(from: u8, hop: u8, fwd: u8, nbrs: &[u8]) -> TopologyMessage {
        TopologyMessage {
            node_id: NodeId(from),
            hop,
            forwardee: NodeId(fwd),
            neighbors: NeighborBitmask::from_nodes(8, nbrs.iter().map(|&n| NodeId(n))),
            forwarded: vec![],
            smes: vec![],
        }
    }

    #[test]
    fn overhearing_someone_elses_message_does_not_queue() {
        let mut s = NodeTopologyState::new(NodeId(1), 8);
        process_overheard(&mut s, &msg(3, 2, 2, &[]), 0);
        assert_eq!(s.forward_queue_len(), 0);
        assert_eq!(ids(s.own_neighbors()), vec![3]);
    }

    #[test]
    fn fifo_policy_keeps_duplicates_in_order() {
        let mut s =
            NodeTopologyState::new(NodeId(1), 8).with_queue_policy(ForwardQueuePolicy::Fifo);
        process_overheard(&mut s, &msg(3, 2, 1, &[1]), 0);
        process_overheard(&mut s, &msg(4, 2, 1, &[1]), 1);
        process_overheard(&mut s, &msg(3, 2, 1, &[1, 4]), 2);
        let q: Vec<u8> = s.forward_queue().map(|r| r.node_id.0).collect();
        assert_eq!(q, vec![3, 4, 3]);
    }

    #[test]
    fn update_policy_refreshes_in_place() {
        let mut s = NodeTopologyState::new(NodeId(1), 8);
        process_overheard(&mut s, &msg(3, 2, 1, &[1]), 0);
        process_overheard(&mut s, &msg(4, 2, 1, &[1]), 1);
        process_overheard(&mut s, &msg(3, 2, 1, &[1, 4]), 2);
        let q: Vec<(u8, Vec<u8>)> = s
            .forward_queue()
            .map(|r| (r.node_id.0, ids(r.neighbors.iter())))
            .collect();
        assert_eq!(q, vec![(3, vec![1, 4]), (4, vec![1])]);
    }

    #[test]
    fn queue_drains_fifo_up_to_capacity() {
        let cfg = NetworkConfiguration {
            max_nodes: 128,
            ..Default::default()
        };
        // 125 - (4 + 16 + 1) = 104 bytes, 17 per record
        assert_eq!(forward_capacity(&cfg), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = NodeTopologyState::new(NodeId(1), 128);
        s.set_hop(Some(1));
        for n in 10..20u8 {
            let mut m = msg(n, 2, 1, &[]);
            m.neighbors = NeighborBitmask::new(128);
            process_overheard(&mut s, &m, n as u64);
        }
        // node 1 owns slot 126 in a 128-node round
        let m = build_uplink_message(&mut s, 126, &cfg, &mut rng).unwrap();
        assert_eq!(
            m.forwarded.iter().map(|r| r.node_id.0).collect::<Vec<_>>(),
            vec![10, 11, 12, 13, 14, 15]
        );
        assert_eq!(s.forward_queue_len(), 4);
        assert!(encode(&m, &cfg).is_ok());
    }

    #[test]
    fn expiry_window_and_reset() {
        let mut s = NodeTopologyState::new(NodeId(1), 8);
        process_overheard(&mut s, &msg(2, 1, 0, &[0]), 0);
        // window of three 7-slot rounds
        assert!(expire_stale(&mut s, 20, 21).is_empty());
        process_overheard(&mut s, &msg(2, 1, 0, &[0]), 14);
        assert!(expire_stale(&mut s, 34, 21).is_empty());
        assert_eq!(expire_stale(&mut s, 35, 21), vec![NodeId(2)]);
        assert!(s.local_links().is_empty());
    }

    #[test]
    fn master_last_writer_wins() {
        let mut m = MasterGraphState::new(8);
        assert_eq!(m.graph().node_count(), 1);
        master_process(&mut m, &msg(1, 1, 0, &[0, 2, 3]), 0);
        assert!(m.graph().has_edge(NodeId(1), NodeId(3)));
        master_process(&mut m, &msg(1, 1, 0, &[0, 2]), 7);
        let g = m.graph();
        assert!(!g.has_edge(NodeId(1), NodeId(3)));
        assert!(g.has_edge(NodeId(1), NodeId(2)));
    }

    #[test]
    fn codec_rejects_garbage() {
        let cfg = cfg8();
        assert!(matches!(decode(&[], &cfg), Err(CodecError::Malformed(_))));
        let bytes = encode(&msg(2, 1, 0, &[0, 3]), &cfg).unwrap();
        assert_eq!(bytes.len(), message_overhead_bytes(8));
        assert_eq!(decode(&bytes, &cfg).unwrap(), msg(2, 1, 0, &[0, 3]));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode(&longer, &cfg).is_err());
        assert!(decode(&bytes[..bytes.len() - 1], &cfg).is_err());
    }

    #[test]
    fn oversize_is_rejected() {
        let cfg = cfg8();
        let mut m = msg(2, 1, 0, &[0]);
        m.smes = vec![
            StreamManagementElement {
                src: NodeId(2),
                dst: NodeId(0),
                period_ms: 200,
                spatial_redundancy: 1,
                temporal_redundancy: 1,
                action: SmeAction::Open,
            };
            14
        ];
        assert!(matches!(encode(&m, &cfg), Err(CodecError::Oversize { .. })));
    }
}
