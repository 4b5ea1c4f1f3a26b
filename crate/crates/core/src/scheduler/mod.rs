//! Centralized stream scheduling at the master.
//!
//! A stream is a periodic, unidirectional logical link from a source to a
//! destination. Each stream is routed over `spatial_redundancy` paths, each hop
//! repeated `temporal_redundancy` times, and every period instance inside the
//! data superframe gets the same placement shifted by one period.

mod codec;
mod greedy;
mod latency;
mod routing;
mod verify;

use std::fmt;

use crate::netconfig::{FrameLayout, SlotGrid};
use crate::NodeId;

pub use codec::{decode_schedule, dump_schedule, encode_schedule, ScheduleCodecError};
pub use greedy::{schedule_streams, RejectReason, Rejection, ScheduleOutcome};
pub use latency::latency_bounds;
pub use routing::{route_paths, RoutingError};
pub use verify::{verify_schedule, Proposition, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SmeAction {
    Open,
    Close,
}

/// Stream request carried to the master inside uplink messages.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamManagementElement {
    pub src: NodeId,
    pub dst: NodeId,
    pub period_ms: u32,
    pub spatial_redundancy: u8,
    pub temporal_redundancy: u8,
    pub action: SmeAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamState {
    Requested,
    Scheduled,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    pub id: u16,
    pub src: NodeId,
    pub dst: NodeId,
    pub period_ms: u32,
    pub spatial_redundancy: u8,
    pub temporal_redundancy: u8,
    pub state: StreamState,
}

impl Stream {
    pub fn new(id: u16, src: u8, dst: u8, period_ms: u32, spatial: u8, temporal: u8) -> Self {
        Stream {
            id,
            src: NodeId(src),
            dst: NodeId(dst),
            period_ms,
            spatial_redundancy: spatial,
            temporal_redundancy: temporal,
            state: StreamState::Requested,
        }
    }

    pub fn from_sme(id: u16, sme: &StreamManagementElement) -> Self {
        Stream {
            id,
            src: sme.src,
            dst: sme.dst,
            period_ms: sme.period_ms,
            spatial_redundancy: sme.spatial_redundancy,
            temporal_redundancy: sme.temporal_redundancy,
            state: StreamState::Requested,
        }
    }
}

/// `T(i, j, t)`: node `sender` transmits to `receiver` in data slot `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transmission {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub slot: u32,
}

/// A stream as recorded in a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledStream {
    pub id: u16,
    pub src: NodeId,
    pub dst: NodeId,
    pub period_ms: u32,
    pub spatial_redundancy: u8,
    pub temporal_redundancy: u8,
}

impl From<&Stream> for ScheduledStream {
    fn from(s: &Stream) -> Self {
        ScheduledStream {
            id: s.id,
            src: s.src,
            dst: s.dst,
            period_ms: s.period_ms,
            spatial_redundancy: s.spatial_redundancy,
            temporal_redundancy: s.temporal_redundancy,
        }
    }
}

/// A transmission tagged with the stream (index into `Schedule::streams`) and
/// path index it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScheduledTransmission {
    pub tx: Transmission,
    pub stream: u16,
    pub path: u8,
}

/// Path `P(src, dst, p, z)` as a view over a schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub src: NodeId,
    pub dst: NodeId,
    pub period_ms: u32,
    pub index: u8,
    pub transmissions: Vec<Transmission>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub id: u32,
    pub superframe_tiles: u32,
    pub activation_tile: u64,
    pub layout: FrameLayout,
    pub streams: Vec<ScheduledStream>,
    pub transmissions: Vec<ScheduledTransmission>,
}

impl Schedule {
    pub fn empty(layout: FrameLayout) -> Self {
        let tiles = layout.tiles.len() as u32;
        Schedule {
            id: 0,
            superframe_tiles: tiles,
            activation_tile: 0,
            layout,
            streams: Vec::new(),
            transmissions: Vec::new(),
        }
    }

    pub fn grid(&self) -> SlotGrid {
        self.layout.grid(self.superframe_tiles)
    }

    /// Paths in stream order, transmissions in slot order.
    pub fn paths(&self) -> Vec<Path> {
        let mut out = Vec::new();
        for (si, s) in self.streams.iter().enumerate() {
            for z in 0..s.spatial_redundancy {
                let mut txs: Vec<Transmission> = self
                    .transmissions
                    .iter()
                    .filter(|t| t.stream as usize == si && t.path == z)
                    .map(|t| t.tx)
                    .collect();
                txs.sort_by_key(|t| t.slot);
                out.push(Path {
                    src: s.src,
                    dst: s.dst,
                    period_ms: s.period_ms,
                    index: z,
                    transmissions: txs,
                });
            }
        }
        out
    }

    pub fn stream_index(&self, id: u16) -> Option<usize> {
        self.streams.iter().position(|s| s.id == id)
    }
}

impl fmt::Display for Transmission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T({},{},{})", self.sender, self.receiver, self.slot)
    }
}
