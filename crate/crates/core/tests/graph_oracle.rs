mod common;

use std::collections::HashSet;

use common::{graph_oracle, map_counts, random_events};
use proptest::prelude::*;
use rand::Rng;
use uuid::Uuid;
use wayfinder::graph::{EditCommand, NavigationEvent, NodeId, SessionMap};

fn build(events: &[NavigationEvent], cap: Option<u64>) -> (SessionMap, SessionMap) {
    let mut map = SessionMap::new(Uuid::nil(), events.first().map_or(0, |e| e.ts), cap);
    let mut replica = map.clone();
    for ev in events {
        let d = map.apply_event(ev);
        replica.apply_delta(&d);
    }
    (map, replica)
}

fn expected_dwell_ms(events: &[NavigationEvent], end: i64, cap: Option<u64>) -> u64 {
    let mut ts: Vec<i64> = events.iter().map(|e| e.ts).collect();
    ts.push(end);
    ts.windows(2)
        .map(|w| {
            let gap = (w[1] - w[0]) as u64;
            cap.map_or(gap, |c| gap.min(c))
        })
        .sum()
}

fn check(events: &[NavigationEvent], cap: Option<u64>, end_gap: i64) {
    let (mut map, mut replica) = build(events, cap);
    let want = graph_oracle(events);
    let got = map_counts(&map);
    assert_eq!(got.visits, want.visits);
    assert_eq!(got.edges, want.edges);
    map.validate().unwrap();
    assert_eq!(replica, map);

    let end = events.last().unwrap().ts + end_gap;
    if let Some(d) = map.finalize_dwell(end) {
        replica.apply_delta(&d);
    }
    assert_eq!(replica, map);
    let want_ms = expected_dwell_ms(events, end, cap) as f64;
    assert!(
        (map.total_dwell_seconds() * 1000.0 - want_ms).abs() <= 1.0,
        "dwell {} ms vs {} ms",
        map.total_dwell_seconds() * 1000.0,
        want_ms
    );

    // Every page hangs off the root through a parent chain.
    let tree = map.spanning_tree();
    assert_eq!(tree.len(), map.node_count());
    for n in map.nodes() {
        let mut seen = HashSet::new();
        let mut at = n.node_id;
        while let Some(p) = tree.parent(at) {
            assert!(seen.insert(at), "parent cycle through {at}");
            at = p;
        }
        assert_eq!(at, map.root);
    }
}

#[test]
fn random_traces_match_oracle() {
    let mut rng = common::rng(11);
    for _ in 0..200 {
        let n = rng.random_range(1..200);
        let events = random_events(&mut rng, n, 1_700_000_000_000);
        let cap = rng.random_bool(0.5).then_some(300_000);
        check(&events, cap, rng.random_range(0..1_000_000));
    }
}

proptest! {
    #[test]
    fn any_trace_matches_oracle(seed in any::<u64>(), n in 1usize..120, capped in any::<bool>(), end_gap in 0i64..900_000) {
        let mut rng = common::rng(seed);
        let events = random_events(&mut rng, n, 0);
        check(&events, capped.then_some(60_000), end_gap);
    }

    #[test]
    fn edits_keep_the_map_valid(seed in any::<u64>(), n in 2usize..60, edits in 1usize..40) {
        let mut rng = common::rng(seed);
        let events = random_events(&mut rng, n, 0);
        let (mut map, mut replica) = build(&events, None);
        for _ in 0..edits {
            let ids: Vec<NodeId> = map.nodes().iter().map(|n| n.node_id).collect();
            if ids.is_empty() {
                break;
            }
            let pick = |rng: &mut rand::rngs::StdRng| ids[rng.random_range(0..ids.len())];
            let cmd = match rng.random_range(0..5) {
                0 => EditCommand::AddLink { from: pick(&mut rng), to: pick(&mut rng) },
                1 if !map.edges().is_empty() => {
                    EditCommand::RemoveLink { edge: map.edges()[rng.random_range(0..map.edges().len())].edge_id }
                }
                2 => EditCommand::RemoveNode { node: pick(&mut rng) },
                3 => EditCommand::Reparent { node: pick(&mut rng), new_parent: pick(&mut rng) },
                _ => EditCommand::SetTitle { node: pick(&mut rng), title: "t".into() },
            };
            let before = map.clone();
            match map.edit(&cmd) {
                Ok(d) => {
                    prop_assert_eq!(d.revision, before.revision + 1);
                    replica.apply_delta(&d);
                }
                Err(_) => prop_assert_eq!(&map, &before),
            }
            prop_assert!(map.validate().is_ok(), "{:?}", map.validate());
            prop_assert_eq!(&replica, &map);
            let tree = map.spanning_tree();
            prop_assert_eq!(tree.len(), map.node_count());
        }
    }
}

#[test]
fn revisions_increase_by_one_per_event() {
    let mut rng = common::rng(3);
    let events = random_events(&mut rng, 50, 0);
    let mut map = SessionMap::new(Uuid::nil(), 0, None);
    for (i, ev) in events.iter().enumerate() {
        assert_eq!(map.apply_event(ev).revision, i as u64 + 1);
    }
}
