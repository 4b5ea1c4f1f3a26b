mod support;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tdmh_core::datalink::{
    allocate_buffers, execute_data_slot, extract_node_schedule, hold_intervals, max_hold_overlap,
    slot_intent, NodeDataState, SlotAction, SlotIntent,
};
use tdmh_core::flood::{disseminate_schedule, run_flood, SchedulePacket};
use tdmh_core::scheduler::{
    decode_schedule, encode_schedule, schedule_streams, SmeAction, StreamManagementElement,
};
use tdmh_core::topology::{
    decode, encode, forward_capacity, message_overhead_bytes, ForwardedTopology, NeighborBitmask,
    TopologyMessage, SME_BYTES,
};
use tdmh_core::{NetworkConfiguration, NetworkGraph, NodeId};

use support::*;

fn config_for(max_nodes: u32) -> NetworkConfiguration {
    NetworkConfiguration {
        max_nodes,
        ..Default::default()
    }
}

fn arb_mask(max_nodes: u32, except: u8) -> impl Strategy<Value = NeighborBitmask> {
    prop::collection::btree_set(0..max_nodes as u8, 0..=max_nodes as usize).prop_map(move |s| {
        NeighborBitmask::from_nodes(
            max_nodes,
            s.into_iter().filter(|&n| n != except).map(NodeId),
        )
    })
}

fn arb_sme(max_nodes: u32) -> impl Strategy<Value = StreamManagementElement> {
    let id = 0..max_nodes as u8;
    (
        id.clone(),
        id,
        any::<u32>(),
        any::<u8>(),
        any::<u8>(),
        any::<bool>(),
    )
        .prop_map(|(s, d, p, sp, te, open)| StreamManagementElement {
            src: NodeId(s),
            dst: NodeId(d),
            period_ms: p,
            spatial_redundancy: sp,
            temporal_redundancy: te,
            action: if open {
                SmeAction::Open
            } else {
                SmeAction::Close
            },
        })
}

/// A message that fits the uplink budget of its configuration.
fn arb_message() -> impl Strategy<Value = (NetworkConfiguration, TopologyMessage)> {
    prop_oneof![
        Just(8u32),
        Just(16),
        Just(32),
        Just(100),
        Just(128),
        Just(255)
    ]
    .prop_flat_map(|max_nodes| {
        let c = config_for(max_nodes);
        let cap = forward_capacity(&c);
        let node = 0..max_nodes as u8;
        (
            node.clone(),
            1u8..=u8::MAX,
            node.clone(),
            node.clone().prop_flat_map(move |n| arb_mask(max_nodes, n)),
            prop::collection::vec(
                node.prop_flat_map(move |n| arb_mask(max_nodes, n).prop_map(move |m| (n, m))),
                0..=cap,
            ),
            prop::collection::vec(arb_sme(max_nodes), 0..8),
        )
            .prop_map(move |(id, hop, fwd, nb, recs, mut smes)| {
                let mut nb = nb;
                nb.clear(NodeId(id));
                let b = NeighborBitmask::byte_len(max_nodes);
                let used = message_overhead_bytes(max_nodes) + recs.len() * (1 + b);
                let room = c.uplink_budget_bytes().saturating_sub(used) / SME_BYTES;
                smes.truncate(room);
                let msg = TopologyMessage {
                    node_id: NodeId(id),
                    hop,
                    forwardee: NodeId(fwd),
                    neighbors: nb,
                    forwarded: recs
                        .into_iter()
                        .map(|(n, m)| ForwardedTopology {
                            node_id: NodeId(n),
                            neighbors: m,
                        })
                        .collect(),
                    smes,
                };
                (c.clone(), msg)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn topology_messages_round_trip((c, msg) in arb_message()) {
        let bytes = encode(&msg, &c).unwrap();
        prop_assert!(bytes.len() <= c.uplink_budget_bytes());
        prop_assert_eq!(decode(&bytes, &c).unwrap(), msg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn schedules_round_trip(seed in any::<u64>(), n in 2u8..=12, count in 0usize..=6, id in any::<u32>(), act in any::<u32>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, 0.3);
        let streams = random_streams(&mut rng, n, count);
        let c = NetworkConfiguration::default();
        let mut s = schedule_streams(&g, &streams, &c).schedule;
        s.id = id;
        s.activation_tile = act as u64;
        let bytes = encode_schedule(&s).unwrap();
        prop_assert_eq!(decode_schedule(&bytes, &c).unwrap(), s);
    }

    #[test]
    fn bitmask_is_ceil_of_max_nodes_over_eight(max_nodes in 1u32..=256) {
        prop_assert_eq!(NeighborBitmask::byte_len(max_nodes), max_nodes.div_ceil(8) as usize);
        prop_assert_eq!(NeighborBitmask::new(max_nodes).as_bytes().len(), max_nodes.div_ceil(8) as usize);
    }

    #[test]
    fn lossless_flood_hops_match_bfs(seed in any::<u64>(), n in 1u8..=40, density in 0.0f64..0.3, max_hops in 1u32..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, density);
        let out = run_flood(&g, NodeId::MASTER, max_hops, &mut rng);
        let want: BTreeMap<NodeId, u8> = g
            .bfs_distances(NodeId::MASTER)
            .into_iter()
            .filter(|&(_, d)| d <= max_hops)
            .map(|(k, d)| (k, d as u8))
            .collect();
        let got: BTreeMap<NodeId, u8> = out.iter().collect();
        prop_assert_eq!(got, want);
    }
}

#[test]
fn repeated_dissemination_matches_independent_trials() {
    // a single link of reliability q, flooded r times: P(hold) = 1 - (1 - q)^r
    let mut g = NetworkGraph::new();
    g.add_edge(NodeId(0), NodeId(1), 0.4);
    let packet = SchedulePacket {
        schedule_id: 1,
        activation_tile: 0,
        body: vec![],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 20_000;
    for r in 1..=3u32 {
        let held = (0..trials)
            .filter(|_| disseminate_schedule(&g, &packet, r, 6, &mut rng)[&NodeId(1)])
            .count();
        let p = held as f64 / trials as f64;
        let want = 1.0 - 0.6f64.powi(r as i32);
        // four standard deviations
        let tol = 4.0 * (want * (1.0 - want) / trials as f64).sqrt();
        assert!((p - want).abs() < tol, "r={r}: {p} vs {want}");
    }
}

#[test]
fn buffers_never_exceed_the_concurrent_holds_on_non_wrapping_programs() {
    let c = NetworkConfiguration::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut relays = 0;
    for _ in 0..300 {
        let n = rand::Rng::gen_range(&mut rng, 3..=12);
        let g = random_connected_graph(&mut rng, n, 0.2);
        let streams = random_streams(&mut rng, n, 6);
        let s = schedule_streams(&g, &streams, &c).schedule;
        for node in g.nodes() {
            let p = extract_node_schedule(&s, node);
            let slots = p.actions.len() as u32;
            let holds = hold_intervals(&p);
            let a = allocate_buffers(&p);
            let need = max_hold_overlap(&holds, slots);
            assert!(a.buffer_count >= need);
            if holds.iter().all(|h| h.start + h.len < slots) {
                assert_eq!(a.buffer_count, need, "node {node}");
            }
            for (i, act) in p.actions.iter().enumerate() {
                if let SlotAction::Forward { .. } = act {
                    assert!(
                        a.slot_buffer.contains_key(&(i as u32)),
                        "forward slot {i} has no buffer"
                    );
                }
            }
            relays += usize::from(!holds.is_empty());
        }
    }
    assert!(relays > 100);
}

/// Runs every node's slot program over a lossless radio for `superframes`
/// superframes; returns the (stream id, instance) pairs delivered.
fn run_lossless(
    g: &NetworkGraph,
    s: &tdmh_core::scheduler::Schedule,
    superframes: u64,
) -> BTreeSet<(u16, u64)> {
    let programs: BTreeMap<NodeId, _> = g
        .nodes()
        .map(|n| (n, extract_node_schedule(s, n)))
        .collect();
    let mut states: BTreeMap<NodeId, NodeDataState> = programs
        .iter()
        .map(|(n, p)| (*n, NodeDataState::new(allocate_buffers(p).buffer_count)))
        .collect();
    let slots = s.grid().len() as u32;
    let mut delivered = BTreeSet::new();
    for sf in 0..superframes {
        for slot in 0..slots {
            let instance = |n: &NodeId, stream: u16| {
                let p = &programs[n];
                let per_sf = p.superframe_tiles as u64 / p.period_tiles[&stream];
                sf * per_sf + p.instance_in_superframe(stream, slot)
            };
            let mut on_air = BTreeMap::new();
            for (n, p) in &programs {
                let a = p.actions[slot as usize];
                let Some(stream) = a.stream() else { continue };
                if let SlotIntent::Transmit { to, frame } =
                    slot_intent(&states[n], &a, instance(n, stream))
                {
                    on_air.insert(*n, (to, frame));
                }
            }
            for (n, p) in &programs {
                let a = p.actions[slot as usize];
                let Some(stream) = a.stream() else { continue };
                let heard = a
                    .peer()
                    .and_then(|from| on_air.get(&from))
                    .filter(|(to, _)| to == n)
                    .map(|(_, f)| *f);
                let e =
                    execute_data_slot(states.get_mut(n).unwrap(), &a, instance(n, stream), heard);
                if let Some(f) = e.delivered {
                    delivered.insert((f.stream, f.instance));
                }
            }
        }
    }
    delivered
}

#[test]
fn lossless_data_plane_delivers_every_instance() {
    let c = NetworkConfiguration::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..60 {
        let n = rand::Rng::gen_range(&mut rng, 3..=10);
        let g = random_connected_graph(&mut rng, n, 0.25);
        let streams = random_streams(&mut rng, n, 4);
        let s = schedule_streams(&g, &streams, &c).schedule;
        let got = run_lossless(&g, &s, 2);
        for st in &s.streams {
            let per_sf =
                s.superframe_tiles as u64 * c.tile_duration_ms as u64 / st.period_ms as u64;
            for k in 0..2 * per_sf {
                assert!(
                    got.contains(&(st.id, k)),
                    "stream {} instance {k} lost",
                    st.id
                );
            }
        }
    }
}
