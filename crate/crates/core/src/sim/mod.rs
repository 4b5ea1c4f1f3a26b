//! Deterministic tile-by-tile simulator.
//!
//! A run advances global time one tile at a time. Downlink tiles carry sync or
//! schedule floods, uplink tiles carry one round-robin topology message, and
//! data slots execute the nodes' slot programs over a lossy radio. Every
//! random draw comes from one seeded generator, so a scenario and seed fully
//! determine the metrics and the trace.

mod engine;
pub mod hexgrid;
mod measure;
pub mod power;

use thiserror::Error;

use crate::netconfig::NetworkConfiguration;
use crate::topology::{expiry_window, ForwardFilter, ForwardQueuePolicy};
use crate::{NetworkGraph, NodeId};

pub use engine::run_scenario;
pub use measure::{
    measure_convergence_after_failure, measure_formation_time, measure_stream_reliability,
    Convergence, LinkUptime, MeasureError, Metrics, StreamMetrics, TraceEntry, TraceEvent,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    NodeFail(NodeId),
    NodeJoin(NodeId),
    LinkSet(NodeId, NodeId, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultEvent {
    pub time_ms: u64,
    pub fault: Fault,
}

/// A stream the source node asks for at `open_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamRequest {
    pub open_ms: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub period_ms: u32,
    pub spatial_redundancy: u8,
    pub temporal_redundancy: u8,
}

/// How the master learns the topology and stream requests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlPlane {
    /// Full protocol: floods, uplink topology collection, SME forwarding.
    Simulated,
    /// The master instantly knows every alive link with at least the given
    /// reliability, receives stream requests at their open time, and every
    /// connected node gets each new schedule. Only the data plane is lossy.
    Ideal { min_link_reliability: f64 },
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub config: NetworkConfiguration,
    /// Physical links with per-frame success probability.
    pub graph: NetworkGraph,
    pub faults: Vec<FaultEvent>,
    pub streams: Vec<StreamRequest>,
    pub duration_ms: u64,
    pub seed: u64,
    pub control_plane: ControlPlane,
    pub queue_policy: ForwardQueuePolicy,
    pub forward_filter: ForwardFilter,
    /// Record per-slot control events in the trace, not just milestones.
    pub verbose_trace: bool,
}

impl Scenario {
    /// Defaults: seed 0, simulated control plane, update-in-place queues and
    /// forwarding of changed records with a refresh every two expiry windows.
    pub fn new(config: NetworkConfiguration, graph: NetworkGraph, duration_ms: u64) -> Self {
        let refresh = 2 * expiry_window(&config);
        Scenario {
            name: "scenario".into(),
            config,
            graph,
            faults: Vec::new(),
            streams: Vec::new(),
            duration_ms,
            seed: 0,
            control_plane: ControlPlane::Simulated,
            queue_policy: ForwardQueuePolicy::default(),
            forward_filter: ForwardFilter::Changed {
                refresh_slots: Some(refresh),
            },
            verbose_trace: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        let v = crate::netconfig::validate(&self.config);
        if let Some(first) = v.first() {
            return bad(format!("configuration: {first}"));
        }
        if !self.graph.contains_node(NodeId::MASTER) {
            return bad("graph has no master node 0".into());
        }
        if let Some(n) = self
            .graph
            .nodes()
            .find(|n| n.0 as u32 >= self.config.max_nodes)
        {
            return bad(format!(
                "node {n} exceeds max_nodes {}",
                self.config.max_nodes
            ));
        }
        for f in &self.faults {
            if f.time_ms > self.duration_ms {
                return bad(format!(
                    "fault at {} ms is after the end of the run",
                    f.time_ms
                ));
            }
            match f.fault {
                Fault::NodeFail(n) | Fault::NodeJoin(n) if n.is_master() => {
                    return bad("the master cannot fail or join".into())
                }
                Fault::NodeFail(n) | Fault::NodeJoin(n) if !self.graph.contains_node(n) => {
                    return bad(format!("fault refers to unknown node {n}"))
                }
                Fault::LinkSet(u, v, r) if u == v || !(0.0..=1.0).contains(&r) => {
                    return bad(format!("bad link fault {u} {v} {r}"))
                }
                _ => {}
            }
        }
        for s in &self.streams {
            if s.src == s.dst
                || !self.graph.contains_node(s.src)
                || !self.graph.contains_node(s.dst)
            {
                return bad(format!("bad stream {} -> {}", s.src, s.dst));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}
