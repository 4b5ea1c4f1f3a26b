//! Average current estimation from the configuration, data load and
//! connectivity.
//!
//! Per control superframe a node spends charge on:
//! - downlink tiles: a full flood once per sync period (transmitting for one
//!   wave, receiving for the rest), otherwise a short sense window;
//! - uplink slots: its own turn at transmit current, overheard frames at
//!   receive current for the whole slot, and a sense window for the rest;
//! - data slots: transmit or receive current while active.
//!
//! All remaining time is spent asleep. The timebase current is always added.

use crate::datalink::{NodeSlotProgram, SlotAction};
use crate::netconfig::{slot_layout, NetworkConfiguration, TileKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentModel {
    pub i_tx_ma: f64,
    pub i_rx_ma: f64,
    pub i_sleep_ma: f64,
    pub i_timebase_ma: f64,
    /// Listening time before giving up on an idle control slot, as a fraction
    /// of one uplink frame.
    pub sense_fraction: f64,
}

impl Default for CurrentModel {
    fn default() -> Self {
        CurrentModel {
            i_tx_ma: 10.0,
            i_rx_ma: 8.0,
            i_sleep_ma: 0.002,
            i_timebase_ma: 0.1,
            sense_fraction: 0.1,
        }
    }
}

/// Data-slot activity of a node, averaged per control superframe.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DataLoad {
    pub tx_slots: f64,
    pub rx_slots: f64,
}

impl DataLoad {
    /// A fraction `used` of all data slots active, `tx_share` of them transmitting.
    pub fn fraction(config: &NetworkConfiguration, used: f64, tx_share: f64) -> Self {
        let slots = data_slots_per_control_superframe(config) as f64 * used.clamp(0.0, 1.0);
        DataLoad {
            tx_slots: slots * tx_share,
            rx_slots: slots * (1.0 - tx_share),
        }
    }

    /// Load of a node program. Only the first reception slot of each stream
    /// per period instance is counted, since later copies are skipped once a
    /// frame arrives.
    pub fn from_program(config: &NetworkConfiguration, program: &NodeSlotProgram) -> Self {
        let mut tx = 0usize;
        let mut rx = 0usize;
        let mut seen = std::collections::BTreeSet::new();
        for (i, a) in program.actions.iter().enumerate() {
            match a {
                SlotAction::SendFromApp { .. } | SlotAction::Forward { .. } => tx += 1,
                SlotAction::ReceiveAndBuffer { stream, .. }
                | SlotAction::ReceiveToApp { stream, .. } => {
                    if seen.insert((*stream, program.instance_in_superframe(*stream, i as u32))) {
                        rx += 1;
                    }
                }
                SlotAction::Sleep => {}
            }
        }
        let per = config.control_superframe.len() as f64 / program.superframe_tiles.max(1) as f64;
        DataLoad {
            tx_slots: tx as f64 * per,
            rx_slots: rx as f64 * per,
        }
    }
}

pub fn data_slots_per_control_superframe(config: &NetworkConfiguration) -> u32 {
    config
        .control_superframe
        .iter()
        .map(|&k| slot_layout(config, k).data_slot_count)
        .sum()
}

/// Charge (mA·ms) and awake time (ms) of one downlink flood.
pub fn flood_cost(config: &NetworkConfiguration, model: &CurrentModel) -> (f64, f64) {
    let dl = config.downlink_slot_duration_ms as f64;
    let waves = (config.max_hops + 1) as f64;
    (
        dl * (model.i_tx_ma + model.i_rx_ma * (waves - 1.0)) / waves,
        dl,
    )
}

/// Estimated average node current in mA.
///
/// `connectivity_fraction` is the share of other nodes' uplink slots in which
/// a frame is overheard.
pub fn estimate_power(
    config: &NetworkConfiguration,
    load: &DataLoad,
    connectivity_fraction: f64,
    model: &CurrentModel,
) -> f64 {
    let c = connectivity_fraction.clamp(0.0, 1.0);
    let period = config.control_superframe_ms() as f64;
    if period <= 0.0 {
        return model.i_timebase_ma;
    }
    let sense = model.sense_fraction * config.uplink_frame_duration_ms as f64;
    let mut charge = 0.0;
    let mut awake = 0.0;

    let dl_tiles = config
        .control_superframe
        .iter()
        .filter(|k| **k == TileKind::Downlink)
        .count() as f64;
    // share of downlink tiles carrying a sync flood
    let floods_per_ms = 1.0 / config.sync_period_ms.max(1) as f64;
    let flood_share = (floods_per_ms * period / dl_tiles.max(1.0)).min(1.0);
    let (fc, ft) = flood_cost(config, model);
    charge += dl_tiles * (flood_share * fc + (1.0 - flood_share) * sense * model.i_rx_ma);
    awake += dl_tiles * (flood_share * ft + (1.0 - flood_share) * sense);

    let ul_slots = config.uplinks_per_control_superframe() as f64;
    let ul = config.uplink_slot_duration_ms() as f64;
    let own = 1.0 / config.slots_per_round() as f64;
    charge += ul_slots
        * (own * ul * model.i_tx_ma + (1.0 - own) * (c * ul + (1.0 - c) * sense) * model.i_rx_ma);
    awake += ul_slots * (own * ul + (1.0 - own) * (c * ul + (1.0 - c) * sense));

    let ds = config.data_slot_duration_ms as f64;
    charge += ds * (load.tx_slots * model.i_tx_ma + load.rx_slots * model.i_rx_ma);
    awake += ds * (load.tx_slots + load.rx_slots);

    let asleep = (period - awake).max(0.0);
    model.i_timebase_ma + (charge + asleep * model.i_sleep_ma) / period
}
