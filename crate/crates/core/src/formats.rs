//! Text formats read and written by the command line tool and the bindings.
//!
//! * Configuration: a flat TOML document whose keys are the
//!   [`NetworkConfiguration`] field names. Missing keys take their defaults;
//!   `downlink_slot_duration_ms` and `allowed_periods_ms` default from
//!   `max_hops` and `tile_duration_ms`.
//! * Graph: one `u v reliability` line per undirected link.
//! * Streams: one `src dst period_ms spatial temporal` line per stream.
//! * Scenario: `[section]` headers splitting the file into `config` and `run`
//!   (TOML), `graph`, `ids`, `faults` and `streams` (line based).
//!
//! `#` starts a comment everywhere. Errors carry 1-based line numbers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::netconfig::{default_allowed_periods, default_downlink_slot_ms};
use crate::scheduler::Stream;
use crate::sim::hexgrid::{hexagonal, IdAssignment};
use crate::sim::{ControlPlane, Fault, FaultEvent, Metrics, Scenario, StreamRequest};
use crate::topology::{ForwardFilter, ForwardQueuePolicy};
use crate::{NetworkConfiguration, NetworkGraph, NodeId, TileKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Toml(String),
    #[error("{0}")]
    Invalid(String),
}

fn line_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Line {
        line,
        msg: msg.into(),
    }
}

/// Non-empty lines with comments stripped, paired with their line numbers.
fn content_lines(text: &str, first_line: usize) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(move |(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + first_line, l))
    })
}

fn field<T: std::str::FromStr>(
    line: usize,
    tok: Option<&str>,
    what: &str,
) -> Result<T, FormatError> {
    let tok = tok.ok_or_else(|| line_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| line_err(line, format!("bad {what} `{tok}`")))
}

fn node(line: usize, tok: Option<&str>, what: &str) -> Result<NodeId, FormatError> {
    field::<u8>(line, tok, what).map(NodeId)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    pan_id: Option<u16>,
    channel: Option<u8>,
    sync_period_ms: Option<u32>,
    propagation_delay_compensation: Option<bool>,
    tile_duration_ms: Option<u32>,
    control_superframe: Option<Vec<String>>,
    data_slot_duration_ms: Option<u32>,
    data_frame_size_bytes: Option<u32>,
    downlink_slot_duration_ms: Option<u32>,
    uplink_frames_per_slot: Option<u32>,
    uplink_frame_duration_ms: Option<u32>,
    max_hops: Option<u32>,
    max_nodes: Option<u32>,
    topology_expiry_rounds: Option<u32>,
    schedule_repetitions: Option<u32>,
    allowed_periods_ms: Option<Vec<u32>>,
}

impl RawConfig {
    fn build(self) -> Result<NetworkConfiguration, FormatError> {
        let d = NetworkConfiguration::default();
        let max_hops = self.max_hops.unwrap_or(d.max_hops);
        let tile = self.tile_duration_ms.unwrap_or(d.tile_duration_ms);
        let control_superframe = match self.control_superframe {
            Some(v) => v
                .iter()
                .map(|s| s.parse::<TileKind>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(FormatError::Invalid)?,
            None => d.control_superframe,
        };
        Ok(NetworkConfiguration {
            pan_id: self.pan_id.unwrap_or(d.pan_id),
            channel: self.channel.unwrap_or(d.channel),
            sync_period_ms: self.sync_period_ms.unwrap_or(d.sync_period_ms),
            propagation_delay_compensation: self
                .propagation_delay_compensation
                .unwrap_or(d.propagation_delay_compensation),
            tile_duration_ms: tile,
            control_superframe,
            data_slot_duration_ms: self
                .data_slot_duration_ms
                .unwrap_or(d.data_slot_duration_ms),
            data_frame_size_bytes: self
                .data_frame_size_bytes
                .unwrap_or(d.data_frame_size_bytes),
            downlink_slot_duration_ms: self
                .downlink_slot_duration_ms
                .unwrap_or_else(|| default_downlink_slot_ms(max_hops)),
            uplink_frames_per_slot: self
                .uplink_frames_per_slot
                .unwrap_or(d.uplink_frames_per_slot),
            uplink_frame_duration_ms: self
                .uplink_frame_duration_ms
                .unwrap_or(d.uplink_frame_duration_ms),
            max_hops,
            max_nodes: self.max_nodes.unwrap_or(d.max_nodes),
            topology_expiry_rounds: self
                .topology_expiry_rounds
                .unwrap_or(d.topology_expiry_rounds),
            schedule_repetitions: self.schedule_repetitions.unwrap_or(d.schedule_repetitions),
            allowed_periods_ms: match self.allowed_periods_ms {
                Some(v) => v.into_iter().collect(),
                None => default_allowed_periods(tile),
            },
        })
    }
}

/// Parses a configuration document. Does not validate it.
pub fn parse_config(text: &str) -> Result<NetworkConfiguration, FormatError> {
    parse_config_with(text, &[])
}

/// Keys of the `[run]` scenario section; any other override key targets the
/// configuration.
pub const RUN_KEYS: &[&str] = &[
    "name",
    "duration_ms",
    "seed",
    "control_plane",
    "queue_policy",
    "forward_all",
    "forward_refresh_rounds",
    "verbose_trace",
];

/// Parses `text` as a TOML table and replaces `key = value` for each override.
/// Values are TOML literals; anything that does not parse as one is taken as
/// a plain string.
fn toml_with(text: &str, overrides: &[(&str, &str)]) -> Result<toml::Table, FormatError> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| FormatError::Toml(e.to_string()))?;
    for (k, v) in overrides {
        let value = match format!("v = {v}").parse::<toml::Table>() {
            Ok(mut t) => t
                .remove("v")
                .unwrap_or_else(|| toml::Value::String(v.to_string())),
            Err(_) => toml::Value::String(v.to_string()),
        };
        table.insert(k.to_string(), value);
    }
    Ok(table)
}

/// Like [`parse_config`], with `key = value` overrides applied first.
pub fn parse_config_with(
    text: &str,
    overrides: &[(&str, &str)],
) -> Result<NetworkConfiguration, FormatError> {
    let table = toml_with(text, overrides)?;
    let raw: RawConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| FormatError::Toml(e.to_string()))?;
    raw.build()
}

/// Writes every field, so the output parses back to the same configuration.
pub fn write_config(config: &NetworkConfiguration) -> String {
    let kinds: Vec<String> = config
        .control_superframe
        .iter()
        .map(|k| format!("\"{k}\""))
        .collect();
    let periods: Vec<String> = config
        .allowed_periods_ms
        .iter()
        .map(|p| p.to_string())
        .collect();
    let mut s = String::new();
    let _ = writeln!(s, "pan_id = {}", config.pan_id);
    let _ = writeln!(s, "channel = {}", config.channel);
    let _ = writeln!(s, "sync_period_ms = {}", config.sync_period_ms);
    let _ = writeln!(
        s,
        "propagation_delay_compensation = {}",
        config.propagation_delay_compensation
    );
    let _ = writeln!(s, "tile_duration_ms = {}", config.tile_duration_ms);
    let _ = writeln!(s, "control_superframe = [{}]", kinds.join(", "));
    let _ = writeln!(
        s,
        "data_slot_duration_ms = {}",
        config.data_slot_duration_ms
    );
    let _ = writeln!(
        s,
        "data_frame_size_bytes = {}",
        config.data_frame_size_bytes
    );
    let _ = writeln!(
        s,
        "downlink_slot_duration_ms = {}",
        config.downlink_slot_duration_ms
    );
    let _ = writeln!(
        s,
        "uplink_frames_per_slot = {}",
        config.uplink_frames_per_slot
    );
    let _ = writeln!(
        s,
        "uplink_frame_duration_ms = {}",
        config.uplink_frame_duration_ms
    );
    let _ = writeln!(s, "max_hops = {}", config.max_hops);
    let _ = writeln!(s, "max_nodes = {}", config.max_nodes);
    let _ = writeln!(
        s,
        "topology_expiry_rounds = {}",
        config.topology_expiry_rounds
    );
    let _ = writeln!(s, "schedule_repetitions = {}", config.schedule_repetitions);
    let _ = writeln!(s, "allowed_periods_ms = [{}]", periods.join(", "));
    s
}

fn parse_graph_lines(text: &str, first_line: usize) -> Result<NetworkGraph, FormatError> {
    let mut g = NetworkGraph::new();
    for (ln, l) in content_lines(text, first_line) {
        let mut it = l.split_whitespace();
        let u = node(ln, it.next(), "node")?;
        let v = node(ln, it.next(), "node")?;
        let r: f64 = match it.next() {
            Some(t) => field(ln, Some(t), "reliability")?,
            None => 1.0,
        };
        if it.next().is_some() {
            return Err(line_err(ln, "trailing fields"));
        }
        if u == v {
            return Err(line_err(ln, "self loop"));
        }
        if !(0.0..=1.0).contains(&r) {
            return Err(line_err(ln, format!("reliability {r} outside [0, 1]")));
        }
        g.add_edge(u, v, r);
    }
    Ok(g)
}

/// Parses `u v reliability` lines; a missing reliability means 1.
pub fn parse_graph(text: &str) -> Result<NetworkGraph, FormatError> {
    parse_graph_lines(text, 1)
}

pub fn write_graph(graph: &NetworkGraph) -> String {
    let mut s = String::new();
    for (u, v, r) in graph.edges() {
        let _ = writeln!(s, "{u} {v} {r}");
    }
    s
}

fn parse_stream_fields(
    ln: usize,
    it: &mut std::str::SplitWhitespace<'_>,
) -> Result<(NodeId, NodeId, u32, u8, u8), FormatError> {
    let src = node(ln, it.next(), "source")?;
    let dst = node(ln, it.next(), "destination")?;
    let period = field(ln, it.next(), "period")?;
    let spatial = match it.next() {
        Some(t) => field(ln, Some(t), "spatial redundancy")?,
        None => 1,
    };
    let temporal = match it.next() {
        Some(t) => field(ln, Some(t), "temporal redundancy")?,
        None => 1,
    };
    if it.next().is_some() {
        return Err(line_err(ln, "trailing fields"));
    }
    Ok((src, dst, period, spatial, temporal))
}

/// Parses `src dst period_ms [spatial [temporal]]` lines. Stream ids follow
/// line order.
pub fn parse_streams(text: &str) -> Result<Vec<Stream>, FormatError> {
    let mut out = Vec::new();
    for (ln, l) in content_lines(text, 1) {
        let (src, dst, p, s, t) = parse_stream_fields(ln, &mut l.split_whitespace())?;
        out.push(Stream::new(out.len() as u16, src.0, dst.0, p, s, t));
    }
    Ok(out)
}

pub fn write_streams(streams: &[Stream]) -> String {
    let mut s = String::new();
    for st in streams {
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            st.src, st.dst, st.period_ms, st.spatial_redundancy, st.temporal_redundancy
        );
    }
    s
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    name: Option<String>,
    duration_ms: Option<u64>,
    seed: Option<u64>,
    control_plane: Option<String>,
    queue_policy: Option<String>,
    forward_all: Option<bool>,
    forward_refresh_rounds: Option<u64>,
    verbose_trace: Option<bool>,
}

fn parse_control_plane(s: &str) -> Result<ControlPlane, FormatError> {
    let mut it = s.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some("simulated"), None, None) => Ok(ControlPlane::Simulated),
        (Some("ideal"), r, None) => {
            let min_link_reliability = match r {
                Some(t) => t
                    .parse()
                    .map_err(|_| FormatError::Invalid(format!("bad ideal threshold `{t}`")))?,
                None => f64::MIN_POSITIVE,
            };
            Ok(ControlPlane::Ideal {
                min_link_reliability,
            })
        }
        _ => Err(FormatError::Invalid(format!(
            "control_plane must be `simulated` or `ideal [min_reliability]`, got `{s}`"
        ))),
    }
}

fn parse_queue_policy(s: &str) -> Result<ForwardQueuePolicy, FormatError> {
    match s {
        "update" => Ok(ForwardQueuePolicy::UpdateInPlace),
        "fifo" => Ok(ForwardQueuePolicy::Fifo),
        _ => Err(FormatError::Invalid(format!(
            "queue_policy must be `update` or `fifo`, got `{s}`"
        ))),
    }
}

/// Parses a scenario file.
///
/// The `graph` section holds either edge lines or a single generator line
/// `hexagonal <nodes> [reliability]`; the `ids` section picks `reverse`
/// (default) or `forward` numbering for the generator. Fault lines are
/// `time_ms fail <id>`, `time_ms join <id>` or `time_ms link <u> <v> <r>`;
/// stream lines are `open_ms src dst period_ms [spatial [temporal]]`.
pub fn parse_scenario(text: &str) -> Result<Scenario, FormatError> {
    parse_scenario_with(text, &[])
}

/// Like [`parse_scenario`], with overrides applied to the `[run]` section for
/// keys in [`RUN_KEYS`] and to `[config]` for the rest.
pub fn parse_scenario_with(
    text: &str,
    overrides: &[(&str, &str)],
) -> Result<Scenario, FormatError> {
    let (run_over, cfg_over): (Vec<_>, Vec<_>) = overrides
        .iter()
        .copied()
        .partition(|(k, _)| RUN_KEYS.contains(k));
    let mut sections: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let t = raw.trim();
        if t.starts_with('[') && t.ends_with(']') && !t.starts_with("[[") {
            let name = t[1..t.len() - 1].trim().to_string();
            if !matches!(
                name.as_str(),
                "config" | "graph" | "ids" | "faults" | "streams" | "run"
            ) {
                return Err(line_err(ln, format!("unknown section `{name}`")));
            }
            if sections.contains_key(&name) {
                return Err(line_err(ln, format!("duplicate section `{name}`")));
            }
            sections.insert(name.clone(), (ln + 1, String::new()));
            current = Some(name);
            continue;
        }
        match &current {
            Some(name) => {
                let body = &mut sections.get_mut(name).unwrap().1;
                body.push_str(raw);
                body.push('\n');
            }
            None if content_lines(raw, ln).next().is_some() => {
                return Err(line_err(ln, "content before the first section"));
            }
            None => {}
        }
    }
    let body = |name: &str| sections.get(name).map(|(l, b)| (*l, b.as_str()));

    let config = parse_config_with(body("config").map_or("", |(_, b)| b), &cfg_over)?;
    let ids =
        match body("ids").map(|(l, b)| (l, content_lines(b, l).map(|x| x.1).collect::<Vec<_>>())) {
            None => IdAssignment::Reverse,
            Some((_, v)) if v.is_empty() => IdAssignment::Reverse,
            Some((l, v)) => match v.as_slice() {
                ["reverse"] => IdAssignment::Reverse,
                ["forward"] => IdAssignment::Forward,
                _ => return Err(line_err(l, "ids must be `reverse` or `forward`")),
            },
        };
    let (gl, gb) =
        body("graph").ok_or_else(|| FormatError::Invalid("missing [graph] section".into()))?;
    let first = content_lines(gb, gl).next();
    let graph = match first {
        Some((ln, l)) if l.starts_with("hexagonal") => {
            let mut it = l.split_whitespace().skip(1);
            let n: usize = field(ln, it.next(), "node count")?;
            let r: f64 = match it.next() {
                Some(t) => field(ln, Some(t), "reliability")?,
                None => 1.0,
            };
            if n == 0 || n > 256 {
                return Err(line_err(ln, "node count must be in 1..=256"));
            }
            if content_lines(gb, gl).count() > 1 {
                return Err(line_err(ln, "a generator line must be alone in [graph]"));
            }
            let mut g = NetworkGraph::new();
            let h = hexagonal(n, ids);
            for u in h.nodes() {
                g.add_node(u);
            }
            for (u, v, _) in h.edges() {
                g.add_edge(u, v, r);
            }
            g
        }
        _ => {
            let mut g = parse_graph_lines(gb, gl)?;
            g.add_node(NodeId::MASTER);
            g
        }
    };

    let mut faults = Vec::new();
    if let Some((l, b)) = body("faults") {
        for (ln, line) in content_lines(b, l) {
            let mut it = line.split_whitespace();
            let time_ms: u64 = field(ln, it.next(), "time")?;
            let fault = match it.next() {
                Some("fail") => Fault::NodeFail(node(ln, it.next(), "node")?),
                Some("join") => Fault::NodeJoin(node(ln, it.next(), "node")?),
                Some("link") => Fault::LinkSet(
                    node(ln, it.next(), "node")?,
                    node(ln, it.next(), "node")?,
                    field(ln, it.next(), "reliability")?,
                ),
                other => {
                    return Err(line_err(
                        ln,
                        format!("unknown fault `{}`", other.unwrap_or("")),
                    ))
                }
            };
            if it.next().is_some() {
                return Err(line_err(ln, "trailing fields"));
            }
            faults.push(FaultEvent { time_ms, fault });
        }
    }

    let mut streams = Vec::new();
    if let Some((l, b)) = body("streams") {
        for (ln, line) in content_lines(b, l) {
            let mut it = line.split_whitespace();
            let open_ms: u64 = field(ln, it.next(), "open time")?;
            let (src, dst, period_ms, spatial_redundancy, temporal_redundancy) =
                parse_stream_fields(ln, &mut it)?;
            streams.push(StreamRequest {
                open_ms,
                src,
                dst,
                period_ms,
                spatial_redundancy,
                temporal_redundancy,
            });
        }
    }

    let run: RawRun = toml_with(body("run").map_or("", |(_, b)| b), &run_over)?
        .try_into()
        .map_err(|e: toml::de::Error| FormatError::Toml(e.to_string()))?;
    let duration_ms = run
        .duration_ms
        .ok_or_else(|| FormatError::Invalid("[run] needs duration_ms".into()))?;
    let mut sc = Scenario::new(config, graph, duration_ms);
    sc.name = run.name.unwrap_or_else(|| "scenario".into());
    sc.seed = run.seed.unwrap_or(0);
    sc.faults = faults;
    sc.streams = streams;
    sc.verbose_trace = run.verbose_trace.unwrap_or(false);
    if let Some(cp) = run.control_plane {
        sc.control_plane = parse_control_plane(&cp)?;
    }
    if let Some(q) = run.queue_policy {
        sc.queue_policy = parse_queue_policy(&q)?;
    }
    if let Some(r) = run.forward_refresh_rounds {
        let refresh_slots = (r > 0).then(|| r * sc.config.slots_per_round());
        sc.forward_filter = ForwardFilter::Changed { refresh_slots };
    }
    if run.forward_all == Some(true) {
        sc.forward_filter = ForwardFilter::All;
    }
    Ok(sc)
}

/// Writes a scenario with an explicit edge list; parses back to an equal scenario.
pub fn write_scenario(sc: &Scenario) -> String {
    let mut s = String::from("[config]\n");
    s.push_str(&write_config(&sc.config));
    s.push_str("\n[graph]\n");
    for n in sc
        .graph
        .nodes()
        .filter(|&n| sc.graph.degree(n) == 0 && !n.is_master())
    {
        // isolated nodes cannot be expressed as edges
        let _ = writeln!(s, "# isolated {n}");
    }
    s.push_str(&write_graph(&sc.graph));
    s.push_str("\n[faults]\n");
    for f in &sc.faults {
        let _ = match f.fault {
            Fault::NodeFail(n) => writeln!(s, "{} fail {n}", f.time_ms),
            Fault::NodeJoin(n) => writeln!(s, "{} join {n}", f.time_ms),
            Fault::LinkSet(u, v, r) => writeln!(s, "{} link {u} {v} {r}", f.time_ms),
        };
    }
    s.push_str("\n[streams]\n");
    for r in &sc.streams {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            r.open_ms, r.src, r.dst, r.period_ms, r.spatial_redundancy, r.temporal_redundancy
        );
    }
    s.push_str("\n[run]\n");
    let _ = writeln!(
        s,
        "name = \"{}\"",
        sc.name.replace('\\', "\\\\").replace('"', "\\\"")
    );
    let _ = writeln!(s, "duration_ms = {}", sc.duration_ms);
    let _ = writeln!(s, "seed = {}", sc.seed);
    let cp = match sc.control_plane {
        ControlPlane::Simulated => "simulated".to_string(),
        ControlPlane::Ideal {
            min_link_reliability,
        } => format!("ideal {min_link_reliability}"),
    };
    let _ = writeln!(s, "control_plane = \"{cp}\"");
    let q = match sc.queue_policy {
        ForwardQueuePolicy::UpdateInPlace => "update",
        ForwardQueuePolicy::Fifo => "fifo",
    };
    let _ = writeln!(s, "queue_policy = \"{q}\"");
    match sc.forward_filter {
        ForwardFilter::All => {
            let _ = writeln!(s, "forward_all = true");
        }
        ForwardFilter::Changed { refresh_slots } => {
            let rounds =
                refresh_slots.map_or(0, |r| r.div_ceil(sc.config.slots_per_round().max(1)));
            let _ = writeln!(s, "forward_refresh_rounds = {rounds}");
        }
    }
    let _ = writeln!(s, "verbose_trace = {}", sc.verbose_trace);
    s
}

/// Sorted union of `src_dst` stream keys over several runs, used as the
/// per-stream columns of the metrics CSV.
pub fn stream_columns<'a>(runs: impl IntoIterator<Item = &'a Metrics>) -> Vec<(NodeId, NodeId)> {
    let set: BTreeSet<(NodeId, NodeId)> = runs
        .into_iter()
        .flat_map(|m| m.streams.iter().map(|s| (s.src, s.dst)))
        .collect();
    set.into_iter().collect()
}

/// Header of the metrics CSV for the given stream columns.
pub fn metrics_header(columns: &[(NodeId, NodeId)]) -> Vec<String> {
    let mut h: Vec<String> = [
        "scenario",
        "seed",
        "formation_ms",
        "convergence_ms",
        "silent_ms",
        "overhead",
        "collisions",
        "schedule_conflicts",
        "reschedules",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(columns.iter().map(|(s, d)| format!("stream_{s}_{d}")));
    h
}

/// One metrics CSV row. Absent values are empty cells.
pub fn metrics_row(m: &Metrics, columns: &[(NodeId, NodeId)]) -> Vec<String> {
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    let conv = m.convergence.first();
    let mut row = vec![
        m.scenario.clone(),
        m.seed.to_string(),
        opt(m.formation_time_ms),
        opt(conv.map(|c| c.total_ms)),
        opt(conv.map(|c| c.silent_ms)),
        format!("{:.6}", m.control_overhead),
        m.collisions.to_string(),
        m.schedule_conflicts.to_string(),
        m.reschedules.to_string(),
    ];
    for key in columns {
        let r = m
            .streams
            .iter()
            .find(|s| (s.src, s.dst) == *key)
            .and_then(|s| s.reliability());
        row.push(r.map(|x| format!("{x:.6}")).unwrap_or_default());
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(parse_config("").unwrap(), NetworkConfiguration::default());
    }

    #[test]
    fn config_round_trip() {
        let c = NetworkConfiguration {
            max_hops: 12,
            downlink_slot_duration_ms: 40,
            control_superframe: vec![TileKind::Downlink, TileKind::Uplink, TileKind::Uplink],
            ..Default::default()
        };
        assert_eq!(parse_config(&write_config(&c)).unwrap(), c);
    }

    #[test]
    fn derived_config_defaults_follow_their_inputs() {
        let c = parse_config("max_hops = 10\ntile_duration_ms = 200").unwrap();
        assert_eq!(c.downlink_slot_duration_ms, default_downlink_slot_ms(10));
        assert_eq!(c.allowed_periods_ms, default_allowed_periods(200));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        assert!(matches!(
            parse_config("max_nodez = 3"),
            Err(FormatError::Toml(_))
        ));
    }

    #[test]
    fn graph_errors_have_line_numbers() {
        let e = parse_graph("0 1 1.0\n# c\n1 x 0.5\n").unwrap_err();
        assert_eq!(e, line_err(3, "bad node `x`"));
        assert!(parse_graph("0 0 1").is_err());
        assert!(parse_graph("0 1 1.5").is_err());
    }

    #[test]
    fn streams_default_redundancy() {
        let s = parse_streams("3 0 1000\n4 0 1000 2\n").unwrap();
        assert_eq!((s[0].spatial_redundancy, s[0].temporal_redundancy), (1, 1));
        assert_eq!((s[1].id, s[1].spatial_redundancy), (1, 2));
    }

    #[test]
    fn scenario_sections() {
        let text = "\
[config]
max_nodes = 8

[graph]
0 1 1.0
1 2 0.9

[faults]
5000 fail 2
6000 link 0 2 0.5

[streams]
0 2 0 1000 2 1

[run]
duration_ms = 10000
seed = 7
control_plane = \"ideal 0.8\"
";
        let sc = parse_scenario(text).unwrap();
        assert_eq!(sc.config.max_nodes, 8);
        assert_eq!(sc.graph.edge_count(), 2);
        assert_eq!(sc.faults.len(), 2);
        assert_eq!(sc.streams[0].spatial_redundancy, 2);
        assert_eq!(
            sc.control_plane,
            ControlPlane::Ideal {
                min_link_reliability: 0.8
            }
        );
        let again = parse_scenario(&write_scenario(&sc)).unwrap();
        assert_eq!(again.faults, sc.faults);
        assert_eq!(again.streams, sc.streams);
        assert_eq!(again.graph, sc.graph);
        assert_eq!(again.config, sc.config);
    }

    #[test]
    fn scenario_hexagonal_generator() {
        let sc = parse_scenario("[graph]\nhexagonal 8\n[ids]\nforward\n[run]\nduration_ms = 1\n")
            .unwrap();
        assert_eq!(sc.graph.node_count(), 8);
        assert_eq!(sc.graph, hexagonal(8, IdAssignment::Forward));
    }

    #[test]
    fn overrides_pick_their_section() {
        let text = "[graph]\n0 1\n[run]\nduration_ms = 5\n";
        let sc = parse_scenario_with(
            text,
            &[("seed", "9"), ("max_hops", "3"), ("control_plane", "ideal")],
        )
        .unwrap();
        assert_eq!((sc.seed, sc.config.max_hops), (9, 3));
        assert_eq!(
            sc.config.downlink_slot_duration_ms,
            default_downlink_slot_ms(3)
        );
        assert!(matches!(sc.control_plane, ControlPlane::Ideal { .. }));
        assert!(parse_config_with("", &[("nonsense", "1")]).is_err());
    }

    #[test]
    fn scenario_errors() {
        assert!(matches!(
            parse_scenario("[bogus]\n"),
            Err(FormatError::Line { line: 1, .. })
        ));
        assert!(parse_scenario("[graph]\n0 1\n").is_err());
        let e = parse_scenario("[graph]\n0 1\n[faults]\n10 explode 3\n[run]\nduration_ms=5\n")
            .unwrap_err();
        assert!(matches!(e, FormatError::Line { line: 4, .. }));
    }
}
