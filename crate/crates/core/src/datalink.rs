//! Per-node execution of the data slots.
//!
//! Every node expands the global schedule into a program with one action per
//! data slot of the superframe and repeats it every superframe. Frames held
//! between a reception and a forward live in buffers; buffers are assigned by
//! coloring the hold intervals, so unrelated streams reuse the same buffer
//! when their intervals do not overlap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::netconfig::SlotGrid;
use crate::scheduler::Schedule;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotAction {
    Sleep,
    SendFromApp {
        to: NodeId,
        stream: u16,
        path: u8,
    },
    ReceiveAndBuffer {
        from: NodeId,
        stream: u16,
        path: u8,
        buffer: usize,
    },
    Forward {
        to: NodeId,
        stream: u16,
        path: u8,
        buffer: usize,
    },
    ReceiveToApp {
        from: NodeId,
        stream: u16,
        path: u8,
    },
}

impl SlotAction {
    pub fn name(&self) -> &'static str {
        match self {
            SlotAction::Sleep => "SLEEP",
            SlotAction::SendFromApp { .. } => "SEND_FROM_APP",
            SlotAction::ReceiveAndBuffer { .. } => "RECEIVE_AND_BUFFER",
            SlotAction::Forward { .. } => "FORWARD",
            SlotAction::ReceiveToApp { .. } => "RECEIVE_TO_APP",
        }
    }

    pub fn stream(&self) -> Option<u16> {
        match *self {
            SlotAction::Sleep => None,
            SlotAction::SendFromApp { stream, .. }
            | SlotAction::ReceiveAndBuffer { stream, .. }
            | SlotAction::Forward { stream, .. }
            | SlotAction::ReceiveToApp { stream, .. } => Some(stream),
        }
    }

    pub fn peer(&self) -> Option<NodeId> {
        match *self {
            SlotAction::Sleep => None,
            SlotAction::SendFromApp { to, .. } | SlotAction::Forward { to, .. } => Some(to),
            SlotAction::ReceiveAndBuffer { from, .. } | SlotAction::ReceiveToApp { from, .. } => {
                Some(from)
            }
        }
    }

    pub fn is_transmit(&self) -> bool {
        matches!(
            self,
            SlotAction::SendFromApp { .. } | SlotAction::Forward { .. }
        )
    }

    pub fn is_receive(&self) -> bool {
        matches!(
            self,
            SlotAction::ReceiveAndBuffer { .. } | SlotAction::ReceiveToApp { .. }
        )
    }

    fn with_buffer(self, b: usize) -> SlotAction {
        match self {
            SlotAction::ReceiveAndBuffer {
                from, stream, path, ..
            } => SlotAction::ReceiveAndBuffer {
                from,
                stream,
                path,
                buffer: b,
            },
            SlotAction::Forward {
                to, stream, path, ..
            } => SlotAction::Forward {
                to,
                stream,
                path,
                buffer: b,
            },
            other => other,
        }
    }
}

/// One superframe worth of actions for one node. `period_tiles` maps each
/// stream id the node takes part in to its period in tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSlotProgram {
    pub node: NodeId,
    pub superframe_tiles: u32,
    pub actions: Vec<SlotAction>,
    pub period_tiles: BTreeMap<u16, u64>,
    grid: SlotGrid,
}

impl NodeSlotProgram {
    pub fn grid(&self) -> &SlotGrid {
        &self.grid
    }

    /// Slots with an action other than sleep.
    pub fn active_slots(&self) -> usize {
        self.actions
            .iter()
            .filter(|a| **a != SlotAction::Sleep)
            .count()
    }

    /// Period instance of `stream` for a slot, counted from the start of the
    /// superframe.
    pub fn instance_in_superframe(&self, stream: u16, slot: u32) -> u64 {
        let p = self.period_tiles.get(&stream).copied().unwrap_or(1).max(1);
        self.grid.slot(slot).map_or(0, |s| s.tile as u64 / p)
    }

    /// `slot action peer buffer` lines, one per data slot.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, a) in self.actions.iter().enumerate() {
            let peer = a.peer().map_or("-".to_string(), |p| p.to_string());
            let buf = match a {
                SlotAction::ReceiveAndBuffer { buffer, .. }
                | SlotAction::Forward { buffer, .. } => buffer.to_string(),
                _ => "-".to_string(),
            };
            let _ = writeln!(s, "{i} {} {peer} {buf}", a.name());
        }
        s
    }
}

/// Extracts the part of the schedule concerning `node`, with buffers assigned.
pub fn extract_node_schedule(schedule: &Schedule, node: NodeId) -> NodeSlotProgram {
    let grid = schedule.grid();
    let mut actions = vec![SlotAction::Sleep; grid.len()];
    let mut period_tiles = BTreeMap::new();
    for t in &schedule.transmissions {
        let Some(st) = schedule.streams.get(t.stream as usize) else {
            continue;
        };
        if (t.tx.slot as usize) >= actions.len() || (t.tx.sender != node && t.tx.receiver != node) {
            continue;
        }
        period_tiles.insert(
            st.id,
            grid.period_tiles(st.period_ms)
                .unwrap_or(schedule.superframe_tiles as u64),
        );
        let a = if t.tx.sender == node {
            if node == st.src {
                SlotAction::SendFromApp {
                    to: t.tx.receiver,
                    stream: st.id,
                    path: t.path,
                }
            } else {
                SlotAction::Forward {
                    to: t.tx.receiver,
                    stream: st.id,
                    path: t.path,
                    buffer: 0,
                }
            }
        } else if node == st.dst {
            SlotAction::ReceiveToApp {
                from: t.tx.sender,
                stream: st.id,
                path: t.path,
            }
        } else {
            SlotAction::ReceiveAndBuffer {
                from: t.tx.sender,
                stream: st.id,
                path: t.path,
                buffer: 0,
            }
        };
        let slot = &mut actions[t.tx.slot as usize];
        if *slot == SlotAction::Sleep {
            *slot = a;
        }
    }
    let mut program = NodeSlotProgram {
        node,
        superframe_tiles: schedule.superframe_tiles,
        actions,
        period_tiles,
        grid,
    };
    let assignment = allocate_buffers(&program);
    for (slot, b) in &assignment.slot_buffer {
        program.actions[*slot as usize] = program.actions[*slot as usize].with_buffer(*b);
    }
    program
}

/// A frame held by a relay: live from the first reception of one period
/// instance to the last forward before the next instance arrives. The range
/// `(start, start + len]` is measured in slot indices and may wrap around the
/// superframe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldInterval {
    pub stream: u16,
    pub instance: u64,
    pub start: u32,
    pub len: u32,
    pub buffer: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BufferAssignment {
    pub buffer_count: usize,
    pub intervals: Vec<HoldInterval>,
    /// Buffer used by each receive-and-buffer or forward slot.
    pub slot_buffer: BTreeMap<u32, usize>,
}

fn cyc(from: u32, to: u32, n: u32) -> u32 {
    (to + n - from) % n
}

/// Hold intervals of a program, before buffer assignment.
pub fn hold_intervals(program: &NodeSlotProgram) -> Vec<HoldInterval> {
    let n = program.actions.len() as u32;
    let mut recv: BTreeMap<u16, BTreeMap<u64, Vec<u32>>> = BTreeMap::new();
    let mut fwd: BTreeMap<u16, Vec<u32>> = BTreeMap::new();
    for (i, a) in program.actions.iter().enumerate() {
        match *a {
            SlotAction::ReceiveAndBuffer { stream, .. } => {
                let k = program.instance_in_superframe(stream, i as u32);
                recv.entry(stream)
                    .or_default()
                    .entry(k)
                    .or_default()
                    .push(i as u32);
            }
            SlotAction::Forward { stream, .. } => fwd.entry(stream).or_default().push(i as u32),
            _ => {}
        }
    }
    let mut out = Vec::new();
    for (stream, per_instance) in recv {
        let firsts: Vec<(u64, u32)> = per_instance.iter().map(|(k, v)| (*k, v[0])).collect();
        for (idx, &(instance, start)) in firsts.iter().enumerate() {
            let next = firsts[(idx + 1) % firsts.len()].1;
            let limit = if next == start {
                n
            } else {
                cyc(start, next, n)
            };
            let len = fwd
                .get(&stream)
                .into_iter()
                .flatten()
                .map(|&f| cyc(start, f, n))
                .filter(|&d| d > 0 && d <= limit)
                .max();
            if let Some(len) = len {
                out.push(HoldInterval {
                    stream,
                    instance,
                    start,
                    len,
                    buffer: 0,
                });
            }
        }
    }
    out
}

fn overlaps(a: &HoldInterval, b: &HoldInterval, n: u32) -> bool {
    // slots a frame occupies: start..=start+len, cyclically
    let inside = |x: &HoldInterval, slot: u32| cyc(x.start, slot, n) <= x.len;
    inside(a, b.start) || inside(b, a.start)
}

/// Assigns buffers by greedy coloring of hold intervals in start order.
///
/// Intervals that do not wrap around the superframe form an interval graph,
/// for which this uses exactly as many buffers as the maximum number of frames
/// held at once.
pub fn allocate_buffers(program: &NodeSlotProgram) -> BufferAssignment {
    let n = program.actions.len() as u32;
    let mut intervals = hold_intervals(program);
    intervals.sort_by_key(|h| (h.start, h.stream, h.instance));
    let mut by_buffer: Vec<Vec<usize>> = Vec::new();
    for i in 0..intervals.len() {
        let b = (0..by_buffer.len())
            .find(|&b| {
                by_buffer[b]
                    .iter()
                    .all(|&j| !overlaps(&intervals[i], &intervals[j], n))
            })
            .unwrap_or_else(|| {
                by_buffer.push(Vec::new());
                by_buffer.len() - 1
            });
        by_buffer[b].push(i);
        intervals[i].buffer = b;
    }
    let mut slot_buffer = BTreeMap::new();
    for h in &intervals {
        for d in 0..=h.len {
            let slot = (h.start + d) % n.max(1);
            let a = program.actions[slot as usize];
            let mine = a.stream() == Some(h.stream)
                && matches!(
                    a,
                    SlotAction::ReceiveAndBuffer { .. } | SlotAction::Forward { .. }
                );
            if mine {
                slot_buffer.entry(slot).or_insert(h.buffer);
            }
        }
    }
    BufferAssignment {
        buffer_count: by_buffer.len(),
        intervals,
        slot_buffer,
    }
}

/// Maximum number of hold intervals covering one slot.
pub fn max_hold_overlap(intervals: &[HoldInterval], slots: u32) -> usize {
    (0..slots)
        .map(|s| {
            intervals
                .iter()
                .filter(|h| cyc(h.start, s, slots) <= h.len)
                .count()
        })
        .max()
        .unwrap_or(0)
}

/// Opaque application frame: one per stream per period instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Frame {
    pub stream: u16,
    pub instance: u64,
}

/// Runtime state of a node's data plane.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeDataState {
    pub buffers: Vec<Option<Frame>>,
    received: BTreeSet<(u16, u64)>,
    pub delivered: Vec<Frame>,
}

impl NodeDataState {
    pub fn new(buffer_count: usize) -> Self {
        NodeDataState {
            buffers: vec![None; buffer_count],
            ..Default::default()
        }
    }

    pub fn has_received(&self, stream: u16, instance: u64) -> bool {
        self.received.contains(&(stream, instance))
    }

    /// Forgets received flags of instances older than `instance` for `stream`.
    pub fn reset_flags_before(&mut self, stream: u16, instance: u64) {
        self.received.retain(|&(s, k)| s != stream || k >= instance);
    }
}

/// What a node does on air in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotIntent {
    Transmit { to: NodeId, frame: Frame },
    Listen { from: NodeId },
    Idle,
}

/// Decides the radio activity for `action` in period `instance`.
///
/// Receptions are skipped when this instance's frame already arrived, and a
/// forward with nothing (or an older frame) in the buffer stays silent.
pub fn slot_intent(state: &NodeDataState, action: &SlotAction, instance: u64) -> SlotIntent {
    match *action {
        SlotAction::Sleep => SlotIntent::Idle,
        SlotAction::SendFromApp { to, stream, .. } => SlotIntent::Transmit {
            to,
            frame: Frame { stream, instance },
        },
        SlotAction::Forward {
            to, stream, buffer, ..
        } => match state.buffers.get(buffer).copied().flatten() {
            Some(f) if f.stream == stream && f.instance == instance => {
                SlotIntent::Transmit { to, frame: f }
            }
            _ => SlotIntent::Idle,
        },
        SlotAction::ReceiveAndBuffer { from, stream, .. }
        | SlotAction::ReceiveToApp { from, stream, .. } => {
            if state.has_received(stream, instance) {
                SlotIntent::Idle
            } else {
                SlotIntent::Listen { from }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotEffect {
    pub emitted: Option<Frame>,
    pub delivered: Option<Frame>,
    pub listened: bool,
}

/// Executes one data slot. `received` is the frame the radio delivered to
/// this node in the slot, if any.
pub fn execute_data_slot(
    state: &mut NodeDataState,
    action: &SlotAction,
    instance: u64,
    received: Option<Frame>,
) -> SlotEffect {
    let intent = slot_intent(state, action, instance);
    let mut effect = SlotEffect::default();
    match intent {
        SlotIntent::Idle => {}
        SlotIntent::Transmit { frame, .. } => effect.emitted = Some(frame),
        SlotIntent::Listen { .. } => {
            effect.listened = true;
            let expected = action.stream().map(|stream| Frame { stream, instance });
            if let Some(f) = received.filter(|f| Some(*f) == expected) {
                state.received.insert((f.stream, f.instance));
                match *action {
                    SlotAction::ReceiveAndBuffer { buffer, .. } => {
                        if state.buffers.len() <= buffer {
                            state.buffers.resize(buffer + 1, None);
                        }
                        state.buffers[buffer] = Some(f);
                    }
                    SlotAction::ReceiveToApp { .. } => {
                        state.delivered.push(f);
                        effect.delivered = Some(f);
                    }
                    _ => {}
                }
            }
        }
    }
    effect
}
