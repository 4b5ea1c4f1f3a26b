//! Binary schedule format carried in schedule floods.
//!
//! All integers little-endian.
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | schedule id |
//! | 4 | data superframe length in tiles |
//! | 8 | activation tile |
//! | 2 | stream count `S` |
//! | 4 | transmission count `T` |
//! | S × 10 | streams: id (u16), src, dst, period_ms (u32), spatial, temporal |
//! | T × 7 | transmissions: sender, receiver, slot (u16), stream index (u16), path |
//!
//! The frame layout is not transmitted; every node derives it from the
//! shared network configuration.

use std::fmt::Write;

use thiserror::Error;

use crate::netconfig::NetworkConfiguration;
use crate::NodeId;

use super::{Schedule, ScheduledStream, ScheduledTransmission, Transmission};

pub const HEADER_BYTES: usize = 22;
pub const STREAM_BYTES: usize = 10;
pub const TRANSMISSION_BYTES: usize = 7;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleCodecError {
    #[error("schedule too large to encode: {0}")]
    TooLarge(String),
    #[error("malformed schedule: {0}")]
    Malformed(String),
}

pub fn encode_schedule(schedule: &Schedule) -> Result<Vec<u8>, ScheduleCodecError> {
    let too_large = |what: &str| ScheduleCodecError::TooLarge(what.to_string());
    let n_streams = u16::try_from(schedule.streams.len()).map_err(|_| too_large("stream count"))?;
    let n_tx =
        u32::try_from(schedule.transmissions.len()).map_err(|_| too_large("transmission count"))?;
    let mut out = Vec::with_capacity(
        HEADER_BYTES
            + schedule.streams.len() * STREAM_BYTES
            + schedule.transmissions.len() * TRANSMISSION_BYTES,
    );
    out.extend_from_slice(&schedule.id.to_le_bytes());
    out.extend_from_slice(&schedule.superframe_tiles.to_le_bytes());
    out.extend_from_slice(&schedule.activation_tile.to_le_bytes());
    out.extend_from_slice(&n_streams.to_le_bytes());
    out.extend_from_slice(&n_tx.to_le_bytes());
    for s in &schedule.streams {
        out.extend_from_slice(&s.id.to_le_bytes());
        out.push(s.src.0);
        out.push(s.dst.0);
        out.extend_from_slice(&s.period_ms.to_le_bytes());
        out.push(s.spatial_redundancy);
        out.push(s.temporal_redundancy);
    }
    for t in &schedule.transmissions {
        let slot = u16::try_from(t.tx.slot).map_err(|_| too_large("slot index"))?;
        out.push(t.tx.sender.0);
        out.push(t.tx.receiver.0);
        out.extend_from_slice(&slot.to_le_bytes());
        out.extend_from_slice(&t.stream.to_le_bytes());
        out.push(t.path);
    }
    Ok(out)
}

pub fn decode_schedule(
    bytes: &[u8],
    config: &NetworkConfiguration,
) -> Result<Schedule, ScheduleCodecError> {
    let bad = |m: String| ScheduleCodecError::Malformed(m);
    if bytes.len() < HEADER_BYTES {
        return Err(bad(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let id = u32_at(0);
    let superframe_tiles = u32_at(4);
    let activation_tile = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let n_streams = u16_at(16) as usize;
    let n_tx = u32_at(18) as usize;
    let expected = HEADER_BYTES + n_streams * STREAM_BYTES + n_tx * TRANSMISSION_BYTES;
    if bytes.len() != expected {
        return Err(bad(format!(
            "length {} does not match header ({expected})",
            bytes.len()
        )));
    }
    if superframe_tiles == 0 {
        return Err(bad("zero-length data superframe".into()));
    }
    let mut pos = HEADER_BYTES;
    let mut streams = Vec::with_capacity(n_streams);
    for _ in 0..n_streams {
        let b = &bytes[pos..pos + STREAM_BYTES];
        streams.push(ScheduledStream {
            id: u16::from_le_bytes([b[0], b[1]]),
            src: NodeId(b[2]),
            dst: NodeId(b[3]),
            period_ms: u32::from_le_bytes([b[4], b[5], b[6], b[7]]),
            spatial_redundancy: b[8],
            temporal_redundancy: b[9],
        });
        pos += STREAM_BYTES;
    }
    let mut transmissions = Vec::with_capacity(n_tx);
    for _ in 0..n_tx {
        let b = &bytes[pos..pos + TRANSMISSION_BYTES];
        let stream = u16::from_le_bytes([b[4], b[5]]);
        if stream as usize >= n_streams {
            return Err(bad(format!("transmission refers to stream index {stream}")));
        }
        transmissions.push(ScheduledTransmission {
            tx: Transmission {
                sender: NodeId(b[0]),
                receiver: NodeId(b[1]),
                slot: u16::from_le_bytes([b[2], b[3]]) as u32,
            },
            stream,
            path: b[6],
        });
        pos += TRANSMISSION_BYTES;
    }
    Ok(Schedule {
        id,
        superframe_tiles,
        activation_tile,
        layout: config.layout(),
        streams,
        transmissions,
    })
}

/// Human-readable dump: a short header, then `slot sender->receiver stream path`
/// per transmission, with the stream given by id.
pub fn dump_schedule(schedule: &Schedule) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# schedule {} superframe_tiles {} activation_tile {}",
        schedule.id, schedule.superframe_tiles, schedule.activation_tile
    );
    for st in &schedule.streams {
        let _ = writeln!(
            s,
            "# stream {} {}->{} period {} spatial {} temporal {}",
            st.id, st.src, st.dst, st.period_ms, st.spatial_redundancy, st.temporal_redundancy
        );
    }
    for t in &schedule.transmissions {
        let id = schedule
            .streams
            .get(t.stream as usize)
            .map_or(t.stream, |st| st.id);
        let _ = writeln!(
            s,
            "{} {}->{} {} {}",
            t.tx.slot, t.tx.sender, t.tx.receiver, id, t.path
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{schedule_streams, Stream};
    use crate::NetworkGraph;

    #[test]
    fn empty_schedule_is_header_only() {
        let c = NetworkConfiguration::default();
        let s = Schedule::empty(c.layout());
        let b = encode_schedule(&s).unwrap();
        assert_eq!(b.len(), HEADER_BYTES);
        assert_eq!(decode_schedule(&b, &c).unwrap(), s);
    }

    #[test]
    fn truncated_input_is_malformed() {
        let c = NetworkConfiguration::default();
        let g = NetworkGraph::from_edges([(0, 1), (1, 2)]);
        let out = schedule_streams(&g, &[Stream::new(0, 2, 0, 200, 1, 1)], &c);
        let b = encode_schedule(&out.schedule).unwrap();
        assert_eq!(decode_schedule(&b, &c).unwrap(), out.schedule);
        assert!(decode_schedule(&b[..b.len() - 1], &c).is_err());
        assert!(decode_schedule(&b[..5], &c).is_err());
    }

    #[test]
    fn dump_lines() {
        let c = NetworkConfiguration::default();
        let g = NetworkGraph::from_edges([(0, 1)]);
        let out = schedule_streams(&g, &[Stream::new(7, 1, 0, 200, 1, 1)], &c);
        let d = dump_schedule(&out.schedule);
        assert!(d.lines().any(|l| l == "0 1->0 7 0"));
    }
}
