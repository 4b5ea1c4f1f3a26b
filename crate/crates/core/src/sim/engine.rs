use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datalink::{
    execute_data_slot, extract_node_schedule, slot_intent, Frame, NodeDataState, NodeSlotProgram,
    SlotIntent,
};
use crate::flood::{is_sync_tile, plan_dissemination, run_flood, sync_counter, DisseminationPlan};
use crate::netconfig::{control_overhead, uplink_node_for_slot, NetworkConfiguration, TileKind};
use crate::scheduler::{
    schedule_streams, Schedule, SmeAction, Stream, StreamManagementElement, StreamState,
};
use crate::topology::{
    build_uplink_message, encode, expire_stale, expiry_window, master_expire_stale, master_process,
    process_overheard, MasterGraphState, NodeTopologyState,
};
use crate::{NetworkGraph, NodeId};

use super::measure::{Convergence, LinkUptime, Metrics, StreamMetrics, TraceEntry, TraceEvent};
use super::power::{flood_cost, CurrentModel};
use super::{measure_convergence_after_failure, ControlPlane, Fault, Scenario, SimError};

type Edge = (NodeId, NodeId);

struct NodeRt {
    present: bool,
    alive: bool,
    topo: NodeTopologyState,
    data: NodeDataState,
    /// Holds the schedule currently in force.
    current: bool,
    /// Holds the schedule being disseminated.
    pending: bool,
    charge: f64,
    awake_ms: f64,
}

struct Active {
    schedule: Schedule,
    graph: NetworkGraph,
    programs: Vec<Option<NodeSlotProgram>>,
}

struct Pending {
    schedule: Schedule,
    graph: NetworkGraph,
    plan: DisseminationPlan,
    floods: u32,
}

struct Window {
    key: (NodeId, NodeId),
    end_tile: u64,
    delivered: bool,
}

#[derive(PartialEq, Eq, Clone)]
struct ScheduleKey {
    nodes: Vec<NodeId>,
    edges: BTreeSet<Edge>,
    streams: Vec<(NodeId, NodeId, u32, u8, u8)>,
}

struct Sim<'a> {
    sc: &'a Scenario,
    cfg: &'a NetworkConfiguration,
    ideal_min: Option<f64>,
    rng: ChaCha8Rng,
    model: CurrentModel,
    nodes: Vec<NodeRt>,
    phys: NetworkGraph,
    alive_phys: NetworkGraph,
    truth: NetworkGraph,
    master: MasterGraphState,
    view: NetworkGraph,
    streams: Vec<Stream>,
    next_stream_id: u16,
    last_key: Option<ScheduleKey>,
    active: Option<(Active, u64)>,
    pending: Option<Pending>,
    schedule_counter: u32,
    ul_index: u64,
    windows: BTreeMap<(u16, u64), Window>,
    stats: BTreeMap<(NodeId, NodeId), (u64, u64)>,
    uptime: BTreeMap<Edge, u64>,
    uptime_tiles: u64,
    failures: Vec<(NodeId, bool, bool)>,
    metrics: Metrics,
    formed: bool,
}

/// Runs a scenario to completion.
pub fn run_scenario(sc: &Scenario) -> Result<Metrics, SimError> {
    sc.validate()?;
    let mut sim = Sim::new(sc);
    sim.run();
    Ok(sim.finish())
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Self {
        let cfg = &sc.config;
        let mut nodes = Vec::with_capacity(cfg.max_nodes as usize);
        for i in 0..cfg.max_nodes {
            let id = NodeId(i as u8);
            let present = sc.graph.contains_node(id);
            let first = sc.faults.iter().find_map(|f| match f.fault {
                Fault::NodeFail(n) | Fault::NodeJoin(n) if n == id => Some(f.fault),
                _ => None,
            });
            let alive = present && !matches!(first, Some(Fault::NodeJoin(_)));
            nodes.push(NodeRt {
                present,
                alive,
                topo: NodeTopologyState::new(id, cfg.max_nodes)
                    .with_queue_policy(sc.queue_policy)
                    .with_forward_filter(sc.forward_filter),
                data: NodeDataState::default(),
                current: false,
                pending: false,
                charge: 0.0,
                awake_ms: 0.0,
            });
        }
        let ideal_min = match sc.control_plane {
            ControlPlane::Simulated => None,
            ControlPlane::Ideal {
                min_link_reliability,
            } => Some(min_link_reliability),
        };
        let mut master = MasterGraphState::new(cfg.max_nodes);
        master.local = NodeTopologyState::new(NodeId::MASTER, cfg.max_nodes)
            .with_queue_policy(sc.queue_policy)
            .with_forward_filter(sc.forward_filter);
        let mut sim = Sim {
            sc,
            cfg,
            ideal_min,
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            model: CurrentModel::default(),
            nodes,
            phys: sc.graph.clone(),
            alive_phys: NetworkGraph::new(),
            truth: NetworkGraph::new(),
            master,
            view: NetworkGraph::new(),
            streams: Vec::new(),
            next_stream_id: 0,
            last_key: None,
            active: None,
            pending: None,
            schedule_counter: 0,
            ul_index: 0,
            windows: BTreeMap::new(),
            stats: BTreeMap::new(),
            uptime: BTreeMap::new(),
            uptime_tiles: 0,
            failures: Vec::new(),
            metrics: Metrics {
                scenario: sc.name.clone(),
                seed: sc.seed,
                control_overhead: control_overhead(cfg),
                ..Default::default()
            },
            formed: false,
        };
        for s in &sc.streams {
            sim.stats.insert((s.src, s.dst), (0, 0));
        }
        sim.refresh_physical();
        sim.refresh_view();
        sim
    }

    fn trace(&mut self, time_ms: u64, event: TraceEvent) {
        self.metrics.trace.push(TraceEntry { time_ms, event });
    }

    fn verbose(&mut self, time_ms: u64, event: TraceEvent) {
        if self.sc.verbose_trace {
            self.trace(time_ms, event);
        }
    }

    fn tile_ms(&self) -> u64 {
        self.cfg.tile_duration_ms as u64
    }

    fn refresh_physical(&mut self) {
        let mut g = NetworkGraph::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.present && n.alive {
                g.add_node(NodeId(i as u8));
            }
        }
        for (u, v, r) in self.phys.edges() {
            if g.contains_node(u) && g.contains_node(v) {
                g.add_edge(u, v, r);
            }
        }
        // every alive node counts, even one only reachable over dead links
        let mut truth = g.filtered(f64::MIN_POSITIVE);
        for n in g.nodes() {
            truth.add_node(n);
        }
        self.truth = truth;
        self.alive_phys = g;
    }

    fn refresh_view(&mut self) {
        let view = match self.ideal_min {
            Some(min) => self.alive_phys.filtered(min).component_of(NodeId::MASTER),
            None => self.master.graph(),
        };
        if self.ideal_min.is_some() {
            let hops = view.bfs_distances(NodeId::MASTER);
            for (i, n) in self.nodes.iter_mut().enumerate() {
                n.topo.set_hop(hops.get(&NodeId(i as u8)).map(|&h| h as u8));
            }
        }
        self.view = view;
    }

    fn view_changed(&mut self, old: &NetworkGraph, time_ms: u64) {
        if old.edge_set() != self.view.edge_set() || old.node_count() != self.view.node_count() {
            let (nodes, edges) = (self.view.node_count(), self.view.edge_count());
            self.verbose(time_ms, TraceEvent::MasterGraph { nodes, edges });
        }
    }

    fn check_milestones(&mut self, time_ms: u64) {
        if !self.formed
            && self.view.edge_set() == self.truth.edge_set()
            && self.view.nodes().eq(self.truth.nodes())
        {
            self.formed = true;
            self.trace(time_ms, TraceEvent::Formed);
        }
        for k in 0..self.failures.len() {
            let (x, silent, gone) = self.failures[k];
            if !silent {
                let heard = self.master.local.neighbor_info(x).is_some()
                    || self
                        .nodes
                        .iter()
                        .any(|n| n.alive && n.topo.neighbor_info(x).is_some());
                if !heard && self.ideal_min.is_none() || self.ideal_min.is_some() {
                    self.failures[k].1 = true;
                    self.trace(time_ms, TraceEvent::NeighborsLost(x));
                }
            }
            if !gone && self.view.degree(x) == 0 {
                self.failures[k].2 = true;
                self.trace(time_ms, TraceEvent::LinksGone(x));
            }
        }
    }

    fn apply_fault(&mut self, time_ms: u64, fault: Fault) {
        self.trace(time_ms, TraceEvent::Fault(fault));
        match fault {
            Fault::NodeFail(n) => {
                let rt = &mut self.nodes[n.index()];
                rt.alive = false;
                rt.current = false;
                rt.pending = false;
                self.failures.retain(|f| f.0 != n);
                self.failures.push((n, false, false));
            }
            Fault::NodeJoin(n) => {
                let (policy, filter) = (self.sc.queue_policy, self.sc.forward_filter);
                let rt = &mut self.nodes[n.index()];
                rt.alive = true;
                rt.current = false;
                rt.pending = false;
                rt.topo = NodeTopologyState::new(n, self.cfg.max_nodes)
                    .with_queue_policy(policy)
                    .with_forward_filter(filter);
                rt.data = NodeDataState::default();
                self.failures.retain(|f| f.0 != n);
            }
            Fault::LinkSet(u, v, r) => {
                if r > 0.0 {
                    self.phys.add_edge(u, v, r);
                } else {
                    self.phys.remove_edge(u, v);
                }
            }
        }
        self.refresh_physical();
        if self.ideal_min.is_some() {
            let old = std::mem::take(&mut self.view);
            self.refresh_view();
            self.view_changed(&old, time_ms);
        }
    }

    fn run(&mut self) {
        let tile_ms = self.tile_ms();
        let total_tiles = self.sc.duration_ms.div_ceil(tile_ms.max(1));
        let mut faults: Vec<_> = self.sc.faults.clone();
        faults.sort_by_key(|f| f.time_ms);
        let mut fault_idx = 0;
        let mut requests: Vec<_> = self.sc.streams.clone();
        requests.sort_by_key(|s| s.open_ms);
        let mut req_idx = 0;

        self.check_milestones(0);
        for t in 0..total_tiles {
            let now = t * tile_ms;
            self.close_windows(t);
            while fault_idx < faults.len() && faults[fault_idx].time_ms <= now {
                let f = faults[fault_idx];
                self.apply_fault(now, f.fault);
                fault_idx += 1;
                self.check_milestones(now);
            }
            while req_idx < requests.len() && requests[req_idx].open_ms <= now {
                let r = requests[req_idx];
                req_idx += 1;
                self.trace(
                    now,
                    TraceEvent::StreamRequested {
                        src: r.src,
                        dst: r.dst,
                    },
                );
                let sme = StreamManagementElement {
                    src: r.src,
                    dst: r.dst,
                    period_ms: r.period_ms,
                    spatial_redundancy: r.spatial_redundancy,
                    temporal_redundancy: r.temporal_redundancy,
                    action: SmeAction::Open,
                };
                if self.ideal_min.is_some() {
                    self.accept_sme(now, &sme);
                } else {
                    self.nodes[r.src.index()].topo.request_stream(sme);
                }
            }
            self.maybe_activate(t);
            match self.cfg.tile_kind(t) {
                TileKind::Downlink => self.downlink_tile(t),
                TileKind::Uplink => self.uplink_tile(t),
            }
            self.start_windows(t);
            self.data_tiles(t);
            if self.formed {
                self.uptime_tiles += 1;
                for e in self.view.edge_set() {
                    *self.uptime.entry(e).or_default() += 1;
                }
            }
        }
        self.close_windows(total_tiles);
        self.metrics.end_ms = total_tiles * tile_ms;
    }

    fn accept_sme(&mut self, now: u64, sme: &StreamManagementElement) {
        let pos = self
            .streams
            .iter()
            .position(|s| s.src == sme.src && s.dst == sme.dst);
        match (sme.action, pos) {
            (SmeAction::Open, None) => {
                self.trace(
                    now,
                    TraceEvent::SmeReceived {
                        src: sme.src,
                        dst: sme.dst,
                    },
                );
                self.streams
                    .push(Stream::from_sme(self.next_stream_id, sme));
                self.next_stream_id = self.next_stream_id.wrapping_add(1);
            }
            (SmeAction::Close, Some(i)) => {
                self.streams.remove(i);
            }
            _ => {}
        }
    }

    fn maybe_activate(&mut self, t: u64) {
        let due = self
            .pending
            .as_ref()
            .is_some_and(|p| p.plan.activation_tile == t);
        if !due {
            return;
        }
        let p = self.pending.take().unwrap();
        let mut programs: Vec<Option<NodeSlotProgram>> = vec![None; self.nodes.len()];
        let involved: BTreeSet<NodeId> = p
            .schedule
            .transmissions
            .iter()
            .flat_map(|x| [x.tx.sender, x.tx.receiver])
            .collect();
        for n in involved {
            if n.index() < programs.len() {
                programs[n.index()] = Some(extract_node_schedule(&p.schedule, n));
            }
        }
        let mut holders = 0;
        for (i, rt) in self.nodes.iter_mut().enumerate() {
            rt.current = rt.alive && (rt.pending || i == 0);
            rt.pending = false;
            if rt.current {
                holders += 1;
            }
            let buffers = programs[i]
                .as_ref()
                .map_or(0, |pr| crate::datalink::allocate_buffers(pr).buffer_count);
            rt.data = NodeDataState::new(buffers);
        }
        for s in &p.schedule.streams {
            let rt = &mut self.nodes[s.src.index()];
            if rt.current {
                rt.topo.acknowledge_sme(s.src, s.dst, SmeAction::Open);
            }
        }
        let time_ms = t * self.tile_ms();
        self.trace(
            time_ms,
            TraceEvent::ScheduleActivated {
                schedule_id: p.schedule.id,
                holders,
                streams: p.schedule.streams.len(),
            },
        );
        self.active = Some((
            Active {
                schedule: p.schedule,
                graph: p.graph,
                programs,
            },
            t,
        ));
    }

    fn maybe_reschedule(&mut self, t: u64) {
        if self.pending.is_some() {
            return;
        }
        let key = ScheduleKey {
            nodes: self.view.nodes().collect(),
            edges: self.view.edge_set(),
            streams: self
                .streams
                .iter()
                .map(|s| {
                    (
                        s.src,
                        s.dst,
                        s.period_ms,
                        s.spatial_redundancy,
                        s.temporal_redundancy,
                    )
                })
                .collect(),
        };
        if self.last_key.as_ref() == Some(&key) {
            return;
        }
        self.last_key = Some(key);
        let active_streams = self
            .active
            .as_ref()
            .map_or(0, |(a, _)| a.schedule.streams.len());
        if self.streams.is_empty() && active_streams == 0 {
            return;
        }
        let out = schedule_streams(&self.view, &self.streams, self.cfg);
        self.streams = out.streams;
        self.schedule_counter += 1;
        let plan = plan_dissemination(self.cfg, t);
        let mut schedule = out.schedule;
        schedule.id = self.schedule_counter;
        schedule.activation_tile = plan.activation_tile;
        let accepted = self
            .streams
            .iter()
            .filter(|s| s.state == StreamState::Scheduled)
            .count();
        self.metrics.reschedules += 1;
        self.trace(
            t * self.tile_ms(),
            TraceEvent::Rescheduled {
                schedule_id: schedule.id,
                accepted,
                rejected: self.streams.len() - accepted,
            },
        );
        self.nodes[0].pending = true;
        self.pending = Some(Pending {
            schedule,
            graph: self.view.clone(),
            plan,
            floods: 0,
        });
    }

    fn downlink_tile(&mut self, t: u64) {
        let now = t * self.tile_ms();
        self.maybe_reschedule(t);
        let sync = is_sync_tile(self.cfg, t);
        let sched_flood = !sync
            && self
                .pending
                .as_ref()
                .is_some_and(|p| p.plan.flood_tiles.contains(&t));
        if !sync && !sched_flood {
            self.charge_sense_all();
            return;
        }
        let reached: BTreeSet<NodeId> = match self.ideal_min {
            Some(_) => self.view.nodes().collect(),
            None => {
                let out = run_flood(
                    &self.alive_phys,
                    NodeId::MASTER,
                    self.cfg.max_hops,
                    &mut self.rng,
                );
                for (n, h) in out.iter() {
                    if !n.is_master() {
                        self.nodes[n.index()].topo.set_hop(Some(h));
                    }
                }
                out.iter().map(|(n, _)| n).collect()
            }
        };
        let (fc, ft) = flood_cost(self.cfg, &self.model);
        let dl = self.cfg.downlink_slot_duration_ms as f64;
        let i_rx = self.model.i_rx_ma;
        for (i, rt) in self.nodes.iter_mut().enumerate() {
            if !rt.alive {
                continue;
            }
            if reached.contains(&NodeId(i as u8)) {
                rt.charge += fc;
                rt.awake_ms += ft;
            } else {
                rt.charge += dl * i_rx;
                rt.awake_ms += dl;
            }
        }
        if sync {
            let counter = sync_counter(self.cfg, t);
            self.verbose(
                now,
                TraceEvent::Sync {
                    counter,
                    reached: reached.len(),
                },
            );
        } else {
            for n in &reached {
                if let Some(rt) = self.nodes.get_mut(n.index()) {
                    rt.pending = true;
                }
            }
            let p = self.pending.as_mut().unwrap();
            p.floods += 1;
            let (schedule_id, repetition) = (p.schedule.id, p.floods);
            self.verbose(
                now,
                TraceEvent::ScheduleFlood {
                    schedule_id,
                    repetition,
                    reached: reached.len(),
                },
            );
        }
    }

    fn charge_sense_all(&mut self) {
        let sense = self.model.sense_fraction * self.cfg.uplink_frame_duration_ms as f64;
        let i_rx = self.model.i_rx_ma;
        for rt in self.nodes.iter_mut().filter(|n| n.alive) {
            rt.charge += sense * i_rx;
            rt.awake_ms += sense;
        }
    }

    fn uplink_tile(&mut self, t: u64) {
        let now = t * self.tile_ms();
        let slot = self.ul_index;
        self.ul_index += 1;
        if self.ideal_min.is_some() {
            self.check_milestones(now);
            return;
        }
        let owner = uplink_node_for_slot(slot, self.cfg.max_nodes);
        let ul = self.cfg.uplink_slot_duration_ms() as f64;
        let sense = self.model.sense_fraction * self.cfg.uplink_frame_duration_ms as f64;
        let mut listeners_heard: BTreeSet<NodeId> = BTreeSet::new();
        let owner_ok = self
            .nodes
            .get(owner.index())
            .is_some_and(|n| n.alive && n.present);
        if owner_ok {
            let built = build_uplink_message(
                &mut self.nodes[owner.index()].topo,
                slot,
                self.cfg,
                &mut self.rng,
            );
            if let Ok(msg) = built {
                debug_assert!(encode(&msg, self.cfg).is_ok());
                let nbrs: Vec<(NodeId, f64)> = self
                    .alive_phys
                    .neighbors(owner)
                    .map(|v| (v, self.alive_phys.reliability(owner, v).unwrap_or(0.0)))
                    .collect();
                for (v, r) in nbrs {
                    if self.rng.gen::<f64>() < r {
                        listeners_heard.insert(v);
                        if v.is_master() {
                            master_process(&mut self.master, &msg, slot);
                        } else {
                            process_overheard(&mut self.nodes[v.index()].topo, &msg, slot);
                        }
                    }
                }
                let rt = &mut self.nodes[owner.index()];
                rt.charge += ul * self.model.i_tx_ma;
                rt.awake_ms += ul;
                self.verbose(
                    now,
                    TraceEvent::Uplink {
                        node: owner,
                        forwardee: msg.forwardee,
                        forwarded: msg.forwarded.len(),
                        smes: msg.smes.len(),
                        heard: listeners_heard.len(),
                    },
                );
            }
        }
        let i_rx = self.model.i_rx_ma;
        for (i, rt) in self.nodes.iter_mut().enumerate() {
            let id = NodeId(i as u8);
            if !rt.alive || (owner_ok && id == owner) {
                continue;
            }
            let d = if listeners_heard.contains(&id) {
                ul
            } else {
                sense
            };
            rt.charge += d * i_rx;
            rt.awake_ms += d;
        }

        let window = expiry_window(self.cfg);
        let mut expired = Vec::new();
        for (i, rt) in self.nodes.iter_mut().enumerate().skip(1) {
            if rt.alive {
                for n in expire_stale(&mut rt.topo, slot, window) {
                    expired.push((NodeId(i as u8), n));
                }
            }
        }
        for n in master_expire_stale(&mut self.master, slot, window) {
            expired.push((NodeId::MASTER, n));
        }
        for (node, neighbor) in expired {
            self.verbose(now, TraceEvent::NeighborExpired { node, neighbor });
        }
        for sme in self.master.take_smes() {
            self.accept_sme(now, &sme);
        }
        let old = std::mem::take(&mut self.view);
        self.refresh_view();
        self.view_changed(&old, now);
        self.check_milestones(now);
    }

    fn start_windows(&mut self, t: u64) {
        let Some((act, at)) = &self.active else {
            return;
        };
        let grid_tiles = act.schedule.superframe_tiles as u64;
        let tile_ms = act.schedule.layout.tile_ms.max(1);
        let mut new = Vec::new();
        for s in &act.schedule.streams {
            let p = (s.period_ms / tile_ms).max(1) as u64;
            if (t - at).is_multiple_of(p) && p <= grid_tiles {
                let inst = ((act.schedule.id as u64) << 32) | ((t - at) / p);
                new.push((s.id, inst, (s.src, s.dst), t + p));
            }
        }
        for (id, inst, key, end) in new {
            for rt in self.nodes.iter_mut() {
                rt.data.reset_flags_before(id, inst);
            }
            if self.stats.contains_key(&key) {
                self.windows.insert(
                    (id, inst),
                    Window {
                        key,
                        end_tile: end,
                        delivered: false,
                    },
                );
            }
        }
    }

    fn close_windows(&mut self, t: u64) {
        let done: Vec<(u16, u64)> = self
            .windows
            .iter()
            .filter(|(_, w)| w.end_tile <= t)
            .map(|(k, _)| *k)
            .collect();
        for k in done {
            let w = self.windows.remove(&k).unwrap();
            let e = self.stats.entry(w.key).or_default();
            e.0 += 1;
            e.1 += u64::from(w.delivered);
        }
    }

    fn data_tiles(&mut self, t: u64) {
        let Some((act, at)) = &self.active else {
            return;
        };
        let l = act.schedule.superframe_tiles as u64;
        let rel = ((t - at) % l) as u32;
        let slots = act
            .programs
            .iter()
            .flatten()
            .next()
            .map(|p| p.grid().slots_in_tile(rel));
        let Some(slots) = slots else { return };
        for slot in slots {
            self.data_slot(t, slot);
        }
    }

    fn data_slot(&mut self, t: u64, slot: u32) {
        let (act, at) = self.active.as_ref().unwrap();
        let at = *at;
        let sched_id = act.schedule.id as u64;
        let ds = self.cfg.data_slot_duration_ms as f64;
        let mut plans = Vec::new();
        for (i, rt) in self.nodes.iter().enumerate() {
            if !rt.alive || !rt.current {
                continue;
            }
            let Some(prog) = &act.programs[i] else {
                continue;
            };
            let a = prog.actions[slot as usize];
            let Some(stream) = a.stream() else { continue };
            let p = prog.period_tiles.get(&stream).copied().unwrap_or(1).max(1);
            let inst = (sched_id << 32) | ((t - at) / p);
            let intent = slot_intent(&rt.data, &a, inst);
            if intent != SlotIntent::Idle {
                plans.push((i, a, inst, intent));
            }
        }
        let transmitters: Vec<(NodeId, NodeId, Frame)> = plans
            .iter()
            .filter_map(|&(i, _, _, intent)| match intent {
                SlotIntent::Transmit { to, frame } => Some((NodeId(i as u8), to, frame)),
                _ => None,
            })
            .collect();
        for (x, a) in transmitters.iter().enumerate() {
            for b in &transmitters[x + 1..] {
                let (i, j, k, l) = (a.0, a.1, b.0, b.1);
                let shares = i == k || i == l || j == k || j == l;
                if shares || act.graph.has_edge(i, l) || act.graph.has_edge(k, j) {
                    self.metrics.schedule_conflicts += 1;
                }
            }
        }
        let mut received: Vec<Option<Frame>> = vec![None; plans.len()];
        for (pi, &(i, _, _, intent)) in plans.iter().enumerate() {
            let SlotIntent::Listen { from } = intent else {
                continue;
            };
            let me = NodeId(i as u8);
            let mut got = None;
            let mut collided = false;
            for &(s, _, frame) in &transmitters {
                let Some(r) = self.alive_phys.reliability(s, me) else {
                    continue;
                };
                let hit = self.rng.gen::<f64>() < r;
                if s == from {
                    if hit {
                        got = Some(frame);
                    }
                } else if hit {
                    collided = true;
                }
            }
            if collided {
                self.metrics.collisions += 1;
                got = None;
            }
            received[pi] = got;
        }
        for (pi, &(i, a, inst, intent)) in plans.iter().enumerate() {
            let rt = &mut self.nodes[i];
            let effect = execute_data_slot(&mut rt.data, &a, inst, received[pi]);
            match intent {
                SlotIntent::Transmit { .. } => {
                    rt.charge += ds * self.model.i_tx_ma;
                    rt.awake_ms += ds;
                }
                SlotIntent::Listen { .. } => {
                    rt.charge += ds * self.model.i_rx_ma;
                    rt.awake_ms += ds;
                }
                SlotIntent::Idle => {}
            }
            if let Some(f) = effect.delivered {
                if let Some(w) = self.windows.get_mut(&(f.stream, f.instance)) {
                    w.delivered = true;
                }
            }
        }
    }

    fn finish(mut self) -> Metrics {
        let sync = 0;
        self.metrics.sync_complete_ms = sync;
        self.metrics.formation_time_ms =
            super::measure_formation_time(&self.metrics.trace, sync).ok();
        let failed: Vec<NodeId> = self
            .sc
            .faults
            .iter()
            .filter_map(|f| match f.fault {
                Fault::NodeFail(n) => Some(n),
                _ => None,
            })
            .collect();
        let mut conv: Vec<Convergence> = Vec::new();
        for n in failed {
            if let Ok(c) = measure_convergence_after_failure(&self.metrics.trace, n) {
                if !conv.contains(&c) {
                    conv.push(c);
                }
            }
        }
        self.metrics.convergence = conv;
        self.metrics.streams = self
            .sc
            .streams
            .iter()
            .map(|s| {
                let (elapsed, delivered) =
                    self.stats.get(&(s.src, s.dst)).copied().unwrap_or((0, 0));
                StreamMetrics {
                    src: s.src,
                    dst: s.dst,
                    period_ms: s.period_ms,
                    elapsed,
                    delivered,
                }
            })
            .collect();
        let mut links: BTreeMap<Edge, f64> =
            self.sc.graph.edges().map(|(u, v, r)| ((u, v), r)).collect();
        for e in self.uptime.keys() {
            links.entry(*e).or_insert(0.0);
        }
        self.metrics.link_uptime = links
            .into_iter()
            .map(|((u, v), r)| LinkUptime {
                u,
                v,
                reliability: r,
                uptime: if self.uptime_tiles == 0 {
                    0.0
                } else {
                    self.uptime.get(&(u, v)).copied().unwrap_or(0) as f64 / self.uptime_tiles as f64
                },
            })
            .collect();
        let total = self.metrics.end_ms.max(1) as f64;
        for (i, rt) in self.nodes.iter().enumerate() {
            if rt.present {
                let asleep = (total - rt.awake_ms).max(0.0);
                let ma =
                    self.model.i_timebase_ma + (rt.charge + asleep * self.model.i_sleep_ma) / total;
                self.metrics.node_current_ma.insert(NodeId(i as u8), ma);
            }
        }
        self.metrics
    }
}
