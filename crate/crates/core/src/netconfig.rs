//! Network configuration and the deterministic time arithmetic derived from it.
//!
//! Time is organized in tiles of equal duration. Every tile starts with one
//! control slot (a downlink flood or an uplink round-robin slot); the rest of
//! the tile holds fixed-length data slots and, when the data slot length does
//! not divide what is left, some slack at the end. The repeating sequence of
//! tile kinds is the control superframe.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::NodeId;

/// Maximum frame payload of the 802.15.4 physical layer, in bytes.
pub const MAX_FRAME_PAYLOAD_BYTES: u32 = 125;

/// Fixed cost of a downlink flood, used by [`default_downlink_slot_ms`].
pub const FLOOD_BASE_MS: u32 = 2;

/// Per-hop rebroadcast cost of a downlink flood.
pub const FLOOD_REBROADCAST_MS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TileKind {
    Downlink,
    Uplink,
}

impl fmt::Display for TileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TileKind::Downlink => f.write_str("downlink"),
            TileKind::Uplink => f.write_str("uplink"),
        }
    }
}

impl std::str::FromStr for TileKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "downlink" | "dl" | "d" => Ok(TileKind::Downlink),
            "uplink" | "ul" | "u" => Ok(TileKind::Uplink),
            other => Err(format!("unknown tile kind `{other}`")),
        }
    }
}

/// Parameters shared by every node of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfiguration {
    pub pan_id: u16,
    pub channel: u8,
    pub sync_period_ms: u32,
    pub propagation_delay_compensation: bool,
    pub tile_duration_ms: u32,
    pub control_superframe: Vec<TileKind>,
    pub data_slot_duration_ms: u32,
    pub data_frame_size_bytes: u32,
    pub downlink_slot_duration_ms: u32,
    pub uplink_frames_per_slot: u32,
    pub uplink_frame_duration_ms: u32,
    pub max_hops: u32,
    pub max_nodes: u32,
    pub topology_expiry_rounds: u32,
    pub schedule_repetitions: u32,
    pub allowed_periods_ms: BTreeSet<u32>,
}

/// Downlink slot length for a given diameter: a fixed flood cost plus one
/// rebroadcast per hop.
pub fn default_downlink_slot_ms(max_hops: u32) -> u32 {
    FLOOD_BASE_MS + max_hops * FLOOD_REBROADCAST_MS
}

/// The 1-2-5 series of tile multiples, which keeps superframe LCMs small.
pub fn default_allowed_periods(tile_duration_ms: u32) -> BTreeSet<u32> {
    [1, 2, 5, 10, 20, 50, 100]
        .into_iter()
        .map(|m| m * tile_duration_ms)
        .collect()
}

impl Default for NetworkConfiguration {
    /// 32 nodes, 6 hops, 100 ms tiles, one downlink and one uplink tile,
    /// 125 byte frames in 6 ms data slots.
    fn default() -> Self {
        let max_hops = 6;
        let tile = 100;
        NetworkConfiguration {
            pan_id: 0xabcd,
            channel: 26,
            sync_period_ms: 10_000,
            propagation_delay_compensation: false,
            tile_duration_ms: tile,
            control_superframe: vec![TileKind::Downlink, TileKind::Uplink],
            data_slot_duration_ms: 6,
            data_frame_size_bytes: MAX_FRAME_PAYLOAD_BYTES,
            downlink_slot_duration_ms: default_downlink_slot_ms(max_hops),
            uplink_frames_per_slot: 1,
            uplink_frame_duration_ms: 6,
            max_hops,
            max_nodes: 32,
            topology_expiry_rounds: 3,
            schedule_repetitions: 3,
            allowed_periods_ms: default_allowed_periods(tile),
        }
    }
}

/// A broken configuration rule, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigViolation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("period {0} ms is not an admissible stream period")]
    InadmissiblePeriod(u32),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl NetworkConfiguration {
    /// Uplink frames actually exchanged per uplink slot, including the
    /// propagation delay compensation reply when enabled.
    pub fn effective_uplink_frames(&self) -> u32 {
        self.uplink_frames_per_slot + u32::from(self.propagation_delay_compensation)
    }

    pub fn uplink_slot_duration_ms(&self) -> u32 {
        self.effective_uplink_frames() * self.uplink_frame_duration_ms
    }

    pub fn control_slot_ms(&self, kind: TileKind) -> u32 {
        match kind {
            TileKind::Downlink => self.downlink_slot_duration_ms,
            TileKind::Uplink => self.uplink_slot_duration_ms(),
        }
    }

    pub fn control_superframe_ms(&self) -> u64 {
        self.control_superframe.len() as u64 * self.tile_duration_ms as u64
    }

    pub fn tile_kind(&self, tile: u64) -> TileKind {
        self.control_superframe[(tile % self.control_superframe.len() as u64) as usize]
    }

    pub fn uplinks_per_control_superframe(&self) -> usize {
        self.control_superframe
            .iter()
            .filter(|k| **k == TileKind::Uplink)
            .count()
    }

    /// Bytes available to one node's topology message in its uplink slot.
    pub fn uplink_budget_bytes(&self) -> usize {
        (self.uplink_frames_per_slot * MAX_FRAME_PAYLOAD_BYTES) as usize
    }

    /// Number of uplink slots in one round-robin round.
    pub fn slots_per_round(&self) -> u64 {
        self.max_nodes.saturating_sub(1).max(1) as u64
    }

    /// Duration of one full round-robin round.
    pub fn round_duration_ms(&self) -> u64 {
        let ul = self.uplinks_per_control_superframe().max(1) as u64;
        self.slots_per_round() * self.control_superframe_ms() / ul
    }

    pub fn master(&self) -> NodeId {
        NodeId::MASTER
    }

    pub fn layout(&self) -> FrameLayout {
        FrameLayout::from_config(self)
    }
}

/// Checks every structural rule; an empty list means the configuration is valid.
pub fn validate(config: &NetworkConfiguration) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    let mut bad = |field: &'static str, rule: String| out.push(ConfigViolation { field, rule });

    if !config.control_superframe.contains(&TileKind::Downlink) {
        bad("control_superframe", "missing DOWNLINK tile".into());
    }
    if !config.control_superframe.contains(&TileKind::Uplink) {
        bad("control_superframe", "missing UPLINK tile".into());
    }
    if config.tile_duration_ms == 0 {
        bad("tile_duration_ms", "must be positive".into());
    }
    if config.data_slot_duration_ms == 0 {
        bad("data_slot_duration_ms", "must be positive".into());
    }
    if config.downlink_slot_duration_ms >= config.tile_duration_ms {
        bad(
            "downlink_slot_duration_ms",
            format!(
                "downlink slot ({} ms) must be shorter than the tile ({} ms)",
                config.downlink_slot_duration_ms, config.tile_duration_ms
            ),
        );
    }
    if config.uplink_frames_per_slot == 0 {
        bad("uplink_frames_per_slot", "must be at least 1".into());
    }
    if config.uplink_frame_duration_ms == 0 {
        bad("uplink_frame_duration_ms", "must be positive".into());
    }
    if config.uplink_slot_duration_ms() >= config.tile_duration_ms {
        bad(
            "uplink_frames_per_slot",
            format!(
                "uplink slot ({} ms) must be shorter than the tile ({} ms)",
                config.uplink_slot_duration_ms(),
                config.tile_duration_ms
            ),
        );
    }
    if config.data_frame_size_bytes == 0 {
        bad("data_frame_size_bytes", "must be positive".into());
    }
    if config.data_frame_size_bytes > MAX_FRAME_PAYLOAD_BYTES {
        bad(
            "data_frame_size_bytes",
            format!(
                "frame exceeds physical maximum ({} > {MAX_FRAME_PAYLOAD_BYTES} bytes)",
                config.data_frame_size_bytes
            ),
        );
    }
    if config.max_hops == 0 {
        bad("max_hops", "must be at least 1".into());
    }
    if !(2..=256).contains(&config.max_nodes) {
        bad("max_nodes", "must be in 2..=256".into());
    }
    if config.topology_expiry_rounds == 0 {
        bad("topology_expiry_rounds", "must be at least 1".into());
    }
    if config.schedule_repetitions == 0 {
        bad("schedule_repetitions", "must be at least 1".into());
    }
    if config.sync_period_ms == 0 {
        bad("sync_period_ms", "must be positive".into());
    }
    if config.allowed_periods_ms.is_empty() {
        bad(
            "allowed_periods_ms",
            "at least one period is required".into(),
        );
    }
    for &p in &config.allowed_periods_ms {
        if p == 0 || config.tile_duration_ms == 0 || p % config.tile_duration_ms != 0 {
            bad(
                "allowed_periods_ms",
                format!(
                    "period {p} ms is not a positive multiple of the tile ({} ms)",
                    config.tile_duration_ms
                ),
            );
        }
    }
    out
}

/// Data-slot arrangement of one tile kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotLayout {
    pub kind: TileKind,
    pub control_slot_ms: u32,
    pub data_slot_count: u32,
    pub slack_ms: u32,
}

/// Splits a tile into its control slot, as many data slots as fit, and slack.
pub fn slot_layout(config: &NetworkConfiguration, kind: TileKind) -> SlotLayout {
    layout_for(
        config.tile_duration_ms,
        config.control_slot_ms(kind),
        config.data_slot_duration_ms,
        kind,
    )
}

fn layout_for(tile_ms: u32, control_ms: u32, data_ms: u32, kind: TileKind) -> SlotLayout {
    let rest = tile_ms.saturating_sub(control_ms);
    let data_slot_count = rest.checked_div(data_ms).unwrap_or(0);
    SlotLayout {
        kind,
        control_slot_ms: control_ms.min(tile_ms),
        data_slot_count,
        slack_ms: rest - data_slot_count * data_ms,
    }
}

/// Owner of an uplink slot: counts down from `max_nodes - 1` to 1 and wraps.
/// The master never owns an uplink slot.
pub fn uplink_node_for_slot(round_slot_index: u64, max_nodes: u32) -> NodeId {
    let others = max_nodes.saturating_sub(1).max(1) as u64;
    NodeId((others - round_slot_index % others) as u8)
}

/// Fraction of data capacity lost to control slots over one control superframe.
///
/// Capacity counts every tile as if it held only data slots, so a control slot
/// costs the data slots it displaces plus any slack it causes.
pub fn control_overhead(config: &NetworkConfiguration) -> f64 {
    if config.data_slot_duration_ms == 0 {
        return 1.0;
    }
    let mut data = 0u64;
    let mut capacity = 0u64;
    for &kind in &config.control_superframe {
        data += slot_layout(config, kind).data_slot_count as u64;
        capacity += (config.tile_duration_ms / config.data_slot_duration_ms) as u64;
    }
    if capacity == 0 {
        return 1.0;
    }
    1.0 - data as f64 / capacity as f64
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Data superframe length in tiles: the LCM of the stream periods and the
/// control superframe. With no streams this is one control superframe.
pub fn data_superframe_length<I>(
    config: &NetworkConfiguration,
    periods: I,
) -> Result<u32, ConfigError>
where
    I: IntoIterator<Item = u32>,
{
    let tile = config.tile_duration_ms as u64;
    if tile == 0 {
        return Err(ConfigError::Invalid("zero tile duration".into()));
    }
    let mut tiles = config.control_superframe.len() as u64;
    for p in periods {
        if !config.allowed_periods_ms.contains(&p) || !(p as u64).is_multiple_of(tile) {
            return Err(ConfigError::InadmissiblePeriod(p));
        }
        let pt = p as u64 / tile;
        tiles = tiles / gcd(tiles, pt) * pt;
    }
    u32::try_from(tiles).map_err(|_| ConfigError::Invalid("data superframe too long".into()))
}

/// Data-slot geometry of one control superframe, detached from the rest of the
/// configuration so that schedules can carry it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLayout {
    pub tile_ms: u32,
    pub data_slot_ms: u32,
    /// One entry per control superframe position.
    pub tiles: Vec<SlotLayout>,
}

impl FrameLayout {
    pub fn from_config(config: &NetworkConfiguration) -> Self {
        FrameLayout {
            tile_ms: config.tile_duration_ms,
            data_slot_ms: config.data_slot_duration_ms,
            tiles: config
                .control_superframe
                .iter()
                .map(|&k| slot_layout(config, k))
                .collect(),
        }
    }

    /// Layout with every tile holding `slots_per_tile` data slots after a
    /// control slot of `control_ms`.
    pub fn uniform(
        tiles_per_superframe: usize,
        slots_per_tile: u32,
        control_ms: u32,
        data_slot_ms: u32,
    ) -> Self {
        let tile_ms = control_ms + slots_per_tile * data_slot_ms;
        let kinds = (0..tiles_per_superframe).map(|i| {
            if i == 0 {
                TileKind::Downlink
            } else {
                TileKind::Uplink
            }
        });
        FrameLayout {
            tile_ms,
            data_slot_ms,
            tiles: kinds
                .map(|k| layout_for(tile_ms, control_ms, data_slot_ms, k))
                .collect(),
        }
    }

    pub fn tile(&self, tile: u64) -> &SlotLayout {
        &self.tiles[(tile % self.tiles.len() as u64) as usize]
    }

    pub fn max_slots_per_tile(&self) -> u32 {
        self.tiles
            .iter()
            .map(|t| t.data_slot_count)
            .max()
            .unwrap_or(0)
    }

    pub fn grid(&self, superframe_tiles: u32) -> SlotGrid {
        SlotGrid::new(self, superframe_tiles)
    }
}

/// Position of a data slot inside a data superframe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataSlot {
    pub tile: u32,
    pub offset: u32,
    /// Start time relative to the superframe start.
    pub start_ms: u64,
}

/// Enumerates the data slots of a data superframe. Slot indices are assigned
/// in time order, tile by tile.
///
/// Periodicity is expressed in tiles: the slot one period after `(tile,
/// offset)` is `(tile + period_tiles, offset)`, which may not exist when tiles
/// of different kinds hold different numbers of data slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotGrid {
    slots: Vec<DataSlot>,
    first_of_tile: Vec<u32>,
    superframe_tiles: u32,
    tile_ms: u32,
    data_slot_ms: u32,
    stride: u64,
}

impl SlotGrid {
    pub fn new(layout: &FrameLayout, superframe_tiles: u32) -> Self {
        let mut slots = Vec::new();
        let mut first_of_tile = Vec::with_capacity(superframe_tiles as usize + 1);
        for tile in 0..superframe_tiles {
            first_of_tile.push(slots.len() as u32);
            let lay = layout.tile(tile as u64);
            let base = tile as u64 * layout.tile_ms as u64 + lay.control_slot_ms as u64;
            for offset in 0..lay.data_slot_count {
                slots.push(DataSlot {
                    tile,
                    offset,
                    start_ms: base + offset as u64 * layout.data_slot_ms as u64,
                });
            }
        }
        first_of_tile.push(slots.len() as u32);
        SlotGrid {
            slots,
            first_of_tile,
            superframe_tiles,
            tile_ms: layout.tile_ms,
            data_slot_ms: layout.data_slot_ms,
            stride: layout.max_slots_per_tile().max(1) as u64,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn superframe_tiles(&self) -> u32 {
        self.superframe_tiles
    }

    pub fn superframe_ms(&self) -> u64 {
        self.superframe_tiles as u64 * self.tile_ms as u64
    }

    pub fn tile_ms(&self) -> u32 {
        self.tile_ms
    }

    pub fn data_slot_ms(&self) -> u32 {
        self.data_slot_ms
    }

    pub fn slot(&self, index: u32) -> Option<&DataSlot> {
        self.slots.get(index as usize)
    }

    /// Index of the data slot at `(tile, offset)`, wrapping tiles around the superframe.
    pub fn index_of(&self, tile: u64, offset: u32) -> Option<u32> {
        if self.superframe_tiles == 0 {
            return None;
        }
        let tile = (tile % self.superframe_tiles as u64) as usize;
        let first = self.first_of_tile[tile];
        let count = self.first_of_tile[tile + 1] - first;
        (offset < count).then_some(first + offset)
    }

    /// Data slots held by a superframe tile.
    pub fn slots_in_tile(&self, tile: u32) -> std::ops::Range<u32> {
        let t = tile as usize;
        self.first_of_tile[t]..self.first_of_tile[t + 1]
    }

    /// The slot `period_tiles` tiles later at the same offset, if it exists.
    pub fn shift(&self, index: u32, period_tiles: u64) -> Option<u32> {
        let s = self.slot(index)?;
        self.index_of(s.tile as u64 + period_tiles, s.offset)
    }

    /// Linear position of a slot on the cyclic `(tile, offset)` timeline.
    pub fn position(&self, index: u32) -> u64 {
        let s = &self.slots[index as usize];
        s.tile as u64 * self.stride + s.offset as u64
    }

    /// Length of one period on the position timeline.
    pub fn period_span(&self, period_tiles: u64) -> u64 {
        period_tiles * self.stride
    }

    /// Forward cyclic distance from slot `a` to slot `b` on the position timeline.
    pub fn cyclic_distance(&self, a: u32, b: u32) -> u64 {
        let cycle = self.superframe_tiles as u64 * self.stride;
        (self.position(b) + cycle - self.position(a)) % cycle
    }

    /// Converts a period in milliseconds to whole tiles.
    pub fn period_tiles(&self, period_ms: u32) -> Option<u64> {
        (self.tile_ms > 0 && period_ms > 0 && period_ms.is_multiple_of(self.tile_ms))
            .then(|| (period_ms / self.tile_ms) as u64)
    }
}
