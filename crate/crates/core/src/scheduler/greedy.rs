use crate::netconfig::{data_superframe_length, NetworkConfiguration, SlotGrid};
use crate::{NetworkGraph, NodeId};

use super::routing::route_paths;
use super::{Schedule, ScheduledStream, ScheduledTransmission, Stream, StreamState, Transmission};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    InadmissiblePeriod,
    InvalidRequest,
    Unreachable,
    /// No feasible slot for hop `sender -> receiver` of `path` after slot
    /// `after` (or from the window start when `None`). `partial` holds the
    /// stream's transmissions placed before the failure, first period only.
    NoCapacity {
        path: u8,
        sender: NodeId,
        receiver: NodeId,
        after: Option<u32>,
        partial: Vec<Transmission>,
    },
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::InadmissiblePeriod => f.write_str("inadmissible period"),
            RejectReason::InvalidRequest => f.write_str("invalid request"),
            RejectReason::Unreachable => f.write_str("destination unreachable"),
            RejectReason::NoCapacity {
                path,
                sender,
                receiver,
                ..
            } => write!(
                f,
                "no free slot for hop {sender}->{receiver} of path {path}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub stream_id: u16,
    pub reason: RejectReason,
}

#[derive(Debug, Clone)]
pub struct ScheduleOutcome {
    pub schedule: Schedule,
    /// Input streams with their final state.
    pub streams: Vec<Stream>,
    pub rejections: Vec<Rejection>,
}

struct Occupancy<'a> {
    graph: &'a NetworkGraph,
    slots: Vec<Vec<(NodeId, NodeId)>>,
}

impl Occupancy<'_> {
    /// Whether `i -> j` can join the transmissions already in `slot` without
    /// breaking unique sender/receiver or concurrent-transmission coexistence.
    fn free(&self, slot: u32, i: NodeId, j: NodeId) -> bool {
        self.slots[slot as usize].iter().all(|&(k, l)| {
            let shares = k == i || k == j || l == i || l == j;
            !shares && !self.graph.has_edge(i, l) && !self.graph.has_edge(k, j)
        })
    }
}

fn valid_request(graph: &NetworkGraph, s: &Stream) -> bool {
    s.src != s.dst
        && s.spatial_redundancy >= 1
        && s.temporal_redundancy >= 1
        && graph.contains_node(s.src)
        && graph.contains_node(s.dst)
}

/// Places streams in request order with greedy earliest-slot allocation.
///
/// Each hop of each path takes the earliest slot after the previous hop, within
/// the stream's first period window, that is free in every period replica
/// across the data superframe. Temporal copies take the next free slots. A
/// stream that cannot be fully placed is rejected and leaves no trace.
pub fn schedule_streams(
    graph: &NetworkGraph,
    streams: &[Stream],
    config: &NetworkConfiguration,
) -> ScheduleOutcome {
    let layout = config.layout();
    let mut out_streams: Vec<Stream> = streams.to_vec();
    let mut rejections = Vec::new();

    let admissible = |s: &Stream| data_superframe_length(config, [s.period_ms]).is_ok();
    let superframe = data_superframe_length(
        config,
        streams
            .iter()
            .filter(|s| admissible(s))
            .map(|s| s.period_ms),
    )
    .unwrap_or(config.control_superframe.len() as u32);
    let grid = layout.grid(superframe);
    let mut occ = Occupancy {
        graph,
        slots: vec![Vec::new(); grid.len()],
    };
    let mut schedule = Schedule {
        id: 0,
        superframe_tiles: superframe,
        activation_tile: 0,
        layout: layout.clone(),
        streams: Vec::new(),
        transmissions: Vec::new(),
    };

    for s in out_streams.iter_mut() {
        let reject = |reason| Rejection {
            stream_id: s.id,
            reason,
        };
        if !admissible(s) {
            s.state = StreamState::Rejected;
            rejections.push(reject(RejectReason::InadmissiblePeriod));
            continue;
        }
        if !valid_request(graph, s) {
            s.state = StreamState::Rejected;
            rejections.push(reject(RejectReason::InvalidRequest));
            continue;
        }
        let Ok(paths) = route_paths(graph, s.src, s.dst, s.spatial_redundancy as usize) else {
            s.state = StreamState::Rejected;
            rejections.push(reject(RejectReason::Unreachable));
            continue;
        };
        let period_tiles = grid.period_tiles(s.period_ms).unwrap_or(superframe as u64);
        match place_stream(&grid, &mut occ, &paths, period_tiles, s.temporal_redundancy) {
            Ok(placed) => {
                let idx = schedule.streams.len() as u16;
                schedule.streams.push(ScheduledStream::from(&*s));
                let instances = superframe as u64 / period_tiles;
                for (path, tx) in placed {
                    for r in 0..instances {
                        let slot = grid
                            .shift(tx.slot, r * period_tiles)
                            .expect("replica checked during placement");
                        schedule.transmissions.push(ScheduledTransmission {
                            tx: Transmission { slot, ..tx },
                            stream: idx,
                            path,
                        });
                    }
                }
                s.state = StreamState::Scheduled;
            }
            Err(reason) => {
                s.state = StreamState::Rejected;
                rejections.push(reject(reason));
            }
        }
    }
    schedule
        .transmissions
        .sort_by_key(|t| (t.tx.slot, t.stream, t.path, t.tx.sender, t.tx.receiver));
    ScheduleOutcome {
        schedule,
        streams: out_streams,
        rejections,
    }
}

fn place_stream(
    grid: &SlotGrid,
    occ: &mut Occupancy<'_>,
    paths: &[Vec<NodeId>],
    period_tiles: u64,
    temporal: u8,
) -> Result<Vec<(u8, Transmission)>, RejectReason> {
    let instances = grid.superframe_tiles() as u64 / period_tiles;
    let window_end = grid
        .slots_in_tile((period_tiles as u32).min(grid.superframe_tiles()) - 1)
        .end;
    let mut placed: Vec<(u8, Transmission)> = Vec::new();
    let replicas = |slot: u32| -> Option<Vec<u32>> {
        (0..instances)
            .map(|r| grid.shift(slot, r * period_tiles))
            .collect()
    };

    let mut failure = None;
    'paths: for (z, path) in paths.iter().enumerate() {
        let mut prev: Option<u32> = None;
        for hop in path.windows(2) {
            let (i, j) = (hop[0], hop[1]);
            for _ in 0..temporal {
                let start = prev.map_or(0, |p| p + 1);
                let found = (start..window_end).find_map(|slot| {
                    let reps = replicas(slot)?;
                    reps.iter().all(|&r| occ.free(r, i, j)).then_some(reps)
                });
                match found {
                    Some(reps) => {
                        for &r in &reps {
                            occ.slots[r as usize].push((i, j));
                        }
                        placed.push((
                            z as u8,
                            Transmission {
                                sender: i,
                                receiver: j,
                                slot: reps[0],
                            },
                        ));
                        prev = Some(reps[0]);
                    }
                    None => {
                        failure = Some(RejectReason::NoCapacity {
                            path: z as u8,
                            sender: i,
                            receiver: j,
                            after: prev,
                            partial: placed.iter().map(|(_, t)| *t).collect(),
                        });
                        break 'paths;
                    }
                }
            }
        }
    }
    if let Some(reason) = failure {
        for (_, tx) in &placed {
            for r in replicas(tx.slot).unwrap_or_default() {
                let v = &mut occ.slots[r as usize];
                if let Some(pos) = v.iter().rposition(|&e| e == (tx.sender, tx.receiver)) {
                    v.remove(pos);
                }
            }
        }
        return Err(reason);
    }
    Ok(placed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::verify_schedule;

    #[test]
    fn two_node_stream_counts() {
        let g = NetworkGraph::from_edges([(0, 1)]);
        let c = NetworkConfiguration::default();
        let out = schedule_streams(&g, &[Stream::new(0, 1, 0, 200, 1, 3)], &c);
        assert_eq!(out.streams[0].state, StreamState::Scheduled);
        assert_eq!(out.schedule.transmissions.len(), 3);
        let slots: Vec<u32> = out
            .schedule
            .transmissions
            .iter()
            .map(|t| t.tx.slot)
            .collect();
        assert_eq!(slots, vec![0, 1, 2]);
        assert!(verify_schedule(&out.schedule, &g).is_empty());
    }

    #[test]
    fn short_period_is_replicated() {
        let g = NetworkGraph::from_edges([(0, 1), (1, 2)]);
        let c = NetworkConfiguration::default();
        let out = schedule_streams(&g, &[Stream::new(0, 2, 0, 100, 1, 1)], &c);
        let got: Vec<(u8, u8, u32)> = out
            .schedule
            .transmissions
            .iter()
            .map(|t| (t.tx.sender.0, t.tx.receiver.0, t.tx.slot))
            .collect();
        // downlink tile holds 14 slots, so the second tile starts at slot 14
        assert_eq!(got, vec![(2, 1, 0), (1, 0, 1), (2, 1, 14), (1, 0, 15)]);
        assert!(verify_schedule(&out.schedule, &g).is_empty());
    }

    #[test]
    fn inadmissible_period_rejected() {
        let g = NetworkGraph::from_edges([(0, 1)]);
        let c = NetworkConfiguration::default();
        let out = schedule_streams(&g, &[Stream::new(0, 1, 0, 150, 1, 1)], &c);
        assert_eq!(out.rejections[0].reason, RejectReason::InadmissiblePeriod);
        assert!(out.schedule.transmissions.is_empty());
    }

    #[test]
    fn overload_rejects_later_stream_only() {
        let g = NetworkGraph::from_edges([(0, 1)]);
        let c = NetworkConfiguration::default();
        // 14 slots in the 100 ms window: 10 + 10 copies cannot both fit
        let streams = [
            Stream::new(0, 1, 0, 100, 1, 10),
            Stream::new(1, 1, 0, 100, 1, 10),
        ];
        let out = schedule_streams(&g, &streams, &c);
        assert_eq!(out.streams[0].state, StreamState::Scheduled);
        assert_eq!(out.streams[1].state, StreamState::Rejected);
        assert_eq!(out.schedule.transmissions.len(), 20);
        assert!(verify_schedule(&out.schedule, &g).is_empty());
    }
}
