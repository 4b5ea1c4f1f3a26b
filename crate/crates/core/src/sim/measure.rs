use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::NodeId;

use super::Fault;

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    Sync {
        counter: u32,
        reached: usize,
    },
    Uplink {
        node: NodeId,
        forwardee: NodeId,
        forwarded: usize,
        smes: usize,
        heard: usize,
    },
    NeighborExpired {
        node: NodeId,
        neighbor: NodeId,
    },
    MasterGraph {
        nodes: usize,
        edges: usize,
    },
    Formed,
    Fault(Fault),
    /// No alive node overhears a failed node any more.
    NeighborsLost(NodeId),
    /// The master's graph holds no link of a failed node.
    LinksGone(NodeId),
    StreamRequested {
        src: NodeId,
        dst: NodeId,
    },
    SmeReceived {
        src: NodeId,
        dst: NodeId,
    },
    Rescheduled {
        schedule_id: u32,
        accepted: usize,
        rejected: usize,
    },
    ScheduleFlood {
        schedule_id: u32,
        repetition: u32,
        reached: usize,
    },
    ScheduleActivated {
        schedule_id: u32,
        holders: usize,
        streams: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub time_ms: u64,
    pub event: TraceEvent,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.time_ms)?;
        match &self.event {
            TraceEvent::Sync { counter, reached } => write!(f, "sync counter={counter} reached={reached}"),
            TraceEvent::Uplink {
                node,
                forwardee,
                forwarded,
                smes,
                heard,
            } => write!(
                f,
                "uplink node={node} forwardee={forwardee} forwarded={forwarded} smes={smes} heard={heard}"
            ),
            TraceEvent::NeighborExpired { node, neighbor } => write!(f, "expire node={node} neighbor={neighbor}"),
            TraceEvent::MasterGraph { nodes, edges } => write!(f, "master_graph nodes={nodes} edges={edges}"),
            TraceEvent::Formed => write!(f, "formed"),
            TraceEvent::Fault(Fault::NodeFail(n)) => write!(f, "fault fail {n}"),
            TraceEvent::Fault(Fault::NodeJoin(n)) => write!(f, "fault join {n}"),
            TraceEvent::Fault(Fault::LinkSet(u, v, r)) => write!(f, "fault link {u} {v} {r:.4}"),
            TraceEvent::NeighborsLost(n) => write!(f, "neighbors_lost node={n}"),
            TraceEvent::LinksGone(n) => write!(f, "links_gone node={n}"),
            TraceEvent::StreamRequested { src, dst } => write!(f, "stream_request src={src} dst={dst}"),
            TraceEvent::SmeReceived { src, dst } => write!(f, "sme_received src={src} dst={dst}"),
            TraceEvent::Rescheduled {
                schedule_id,
                accepted,
                rejected,
            } => write!(f, "reschedule id={schedule_id} accepted={accepted} rejected={rejected}"),
            TraceEvent::ScheduleFlood {
                schedule_id,
                repetition,
                reached,
            } => write!(f, "schedule_flood id={schedule_id} repetition={repetition} reached={reached}"),
            TraceEvent::ScheduleActivated {
                schedule_id,
                holders,
                streams,
            } => write!(f, "schedule_activate id={schedule_id} holders={holders} streams={streams}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamMetrics {
    pub src: NodeId,
    pub dst: NodeId,
    pub period_ms: u32,
    /// Period instances that ended during the run while the stream was scheduled.
    pub elapsed: u64,
    /// Instances in which at least one copy reached the destination.
    pub delivered: u64,
}

impl StreamMetrics {
    pub fn reliability(&self) -> Option<f64> {
        (self.elapsed > 0).then(|| self.delivered.min(self.elapsed) as f64 / self.elapsed as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkUptime {
    pub u: NodeId,
    pub v: NodeId,
    pub reliability: f64,
    pub uptime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Convergence {
    pub node: NodeId,
    pub fail_ms: u64,
    /// Until no alive node lists the failed node as a neighbor.
    pub silent_ms: u64,
    /// Until the master's graph holds no link of the failed node.
    pub total_ms: u64,
}

impl Convergence {
    pub fn propagation_ms(&self) -> u64 {
        self.total_ms - self.silent_ms
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub sync_complete_ms: u64,
    pub formation_time_ms: Option<u64>,
    pub convergence: Vec<Convergence>,
    pub streams: Vec<StreamMetrics>,
    pub link_uptime: Vec<LinkUptime>,
    pub control_overhead: f64,
    pub node_current_ma: BTreeMap<NodeId, f64>,
    /// Receptions destroyed by a concurrent physical transmission.
    pub collisions: u64,
    /// Concurrent transmissions that break the coexistence rules on the
    /// schedule's own graph. Always zero for verified schedules.
    pub schedule_conflicts: u64,
    pub reschedules: u32,
    pub end_ms: u64,
    pub trace: Vec<TraceEntry>,
}

impl Metrics {
    pub fn trace_text(&self) -> String {
        let mut s = String::new();
        for e in &self.trace {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MeasureError {
    #[error("the network never formed")]
    NotFormed,
    #[error("node {0} never failed in this run")]
    NoFailure(NodeId),
    #[error("topology did not converge after node {0} failed")]
    NotConverged(NodeId),
}

/// Time from clock synchronization until the master first holds the full graph.
pub fn measure_formation_time(
    trace: &[TraceEntry],
    sync_complete_ms: u64,
) -> Result<u64, MeasureError> {
    trace
        .iter()
        .find(|e| e.event == TraceEvent::Formed)
        .map(|e| e.time_ms.saturating_sub(sync_complete_ms))
        .ok_or(MeasureError::NotFormed)
}

/// Silent and total convergence after the first failure of `failed`.
pub fn measure_convergence_after_failure(
    trace: &[TraceEntry],
    failed: NodeId,
) -> Result<Convergence, MeasureError> {
    let start = trace
        .iter()
        .position(|e| e.event == TraceEvent::Fault(Fault::NodeFail(failed)))
        .ok_or(MeasureError::NoFailure(failed))?;
    let fail_ms = trace[start].time_ms;
    let after = &trace[start..];
    let find = |ev: TraceEvent| {
        after
            .iter()
            .find(|e| e.event == ev)
            .map(|e| e.time_ms - fail_ms)
    };
    let silent =
        find(TraceEvent::NeighborsLost(failed)).ok_or(MeasureError::NotConverged(failed))?;
    let total = find(TraceEvent::LinksGone(failed)).ok_or(MeasureError::NotConverged(failed))?;
    Ok(Convergence {
        node: failed,
        fail_ms,
        silent_ms: silent,
        total_ms: total.max(silent),
    })
}

/// Delivered over elapsed period instances, per stream in scenario order.
pub fn measure_stream_reliability(metrics: &Metrics) -> Vec<Option<f64>> {
    metrics.streams.iter().map(|s| s.reliability()).collect()
}
