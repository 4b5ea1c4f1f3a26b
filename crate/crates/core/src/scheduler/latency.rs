use std::collections::BTreeMap;

use super::Schedule;

/// Worst-case delivery latency per stream id, in milliseconds.
///
/// For each period instance the latency runs from the start of the source's
/// first transmission in that instance to the end of the last transmission
/// that reaches the destination, so every path and redundant copy is covered.
/// The bound is the maximum over instances.
pub fn latency_bounds(schedule: &Schedule) -> BTreeMap<u16, u64> {
    let grid = schedule.grid();
    let slot_ms = grid.data_slot_ms() as u64;
    let mut out = BTreeMap::new();
    for (si, s) in schedule.streams.iter().enumerate() {
        let Some(p) = grid.period_tiles(s.period_ms) else {
            continue;
        };
        // instance -> (earliest source start, latest destination end)
        let mut inst: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
        for t in schedule
            .transmissions
            .iter()
            .filter(|t| t.stream as usize == si)
        {
            let Some(slot) = grid.slot(t.tx.slot) else {
                continue;
            };
            let k = slot.tile as u64 / p;
            let e = inst.entry(k).or_insert((u64::MAX, 0));
            if t.tx.sender == s.src {
                e.0 = e.0.min(slot.start_ms);
            }
            if t.tx.receiver == s.dst {
                e.1 = e.1.max(slot.start_ms + slot_ms);
            }
        }
        let bound = inst
            .values()
            .filter(|(a, b)| *a != u64::MAX && *b > 0)
            .map(|(a, b)| b.saturating_sub(*a))
            .max();
        if let Some(b) = bound {
            out.insert(s.id, b);
        }
    }
    out
}
