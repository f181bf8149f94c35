mod common;

use std::fs;
use std::io::Write;

use common::{map_from_parents, random_events, random_parents, record_page};
use proptest::prelude::*;
use rand::Rng;
use wayfinder::graph::{EditCommand, NodeId, SessionMap};
use wayfinder::hub::SessionHub;
use wayfinder::store::{load_map, read_log, replay, save_map, JournalEntry};
use wayfinder::{Error, ProxyConfig, SessionSource};

fn busy_map(seed: u64, n: usize) -> SessionMap {
    let mut rng = common::rng(seed);
    let mut map = SessionMap::new(uuid::Uuid::new_v4(), 0, Some(300_000));
    for ev in random_events(&mut rng, n, 0) {
        map.apply_event(&ev);
    }
    let first = map.nodes()[0].node_id;
    map.edit(&EditCommand::AttachThumbnail { node: first, path: "thumbs/a.png".into() }).unwrap();
    map.finalize_dwell(map.clock() + 1234);
    map
}

#[test]
fn thousand_node_map_round_trips() {
    let mut rng = common::rng(1);
    let mut map = map_from_parents(&random_parents(&mut rng, 1000));
    for i in 1..=1000u64 {
        if i % 7 == 0 {
            map.edit(&EditCommand::SetTitle { node: NodeId(i), title: format!("ünïcødé \"{i}\" \n") }).unwrap();
        }
    }
    map.finalize_dwell(map.clock() + 17);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.json");
    save_map(&map, &path).unwrap();
    let back = load_map(&path).unwrap();
    assert_eq!(back, map);
    let again = dir.path().join("again.json");
    save_map(&back, &again).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_map_round_trips(seed in any::<u64>(), n in 1usize..200) {
        let map = busy_map(seed, n);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_map(&map, &path).unwrap();
        prop_assert_eq!(load_map(&path).unwrap(), map);
    }
}

fn drive(hub: &SessionHub, seed: u64, n: usize) {
    let mut rng = common::rng(seed);
    let events = random_events(&mut rng, n, 1_000);
    for (i, ev) in events.iter().enumerate() {
        record_page(hub, &ev.url, ev.referer.as_ref(), ev.title.as_deref(), ev.ts);
        if i % 10 == 9 {
            let snap = hub.snapshot();
            let node = snap.nodes()[rng.random_range(0..snap.nodes().len())].node_id;
            let _ = hub.edit_at(&EditCommand::SetTitle { node, title: format!("edited {i}") }, ev.ts);
        }
    }
    hub.finalize(events.last().unwrap().ts + 60_000);
}

#[test]
fn event_log_replays_to_live_map() {
    for seed in 0..10 {
        let dir = tempfile::tempdir().unwrap();
        let hub = SessionHub::start(dir.path(), Some(300_000), 1_000);
        drive(&hub, seed, 150);
        hub.flush();
        let status = hub.status();
        let log = read_log(&status.session_dir.join("events.jsonl")).unwrap();
        assert!(!log.truncated_tail);
        assert_eq!(replay(&log.records).unwrap(), hub.snapshot());

        // Journal revisions are gapless.
        let journal = fs::read_to_string(status.session_dir.join("journal.jsonl")).unwrap();
        let revs: Vec<u64> = journal
            .lines()
            .map(|l| serde_json::from_str::<JournalEntry>(l).unwrap().revision)
            .collect();
        assert_eq!(revs, (1..=hub.revision()).collect::<Vec<_>>());
    }
}

#[test]
fn truncated_tail_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let hub = SessionHub::start(dir.path(), Some(300_000), 1_000);
    drive(&hub, 42, 60);
    hub.flush();
    let log_path = hub.status().session_dir.join("events.jsonl");
    let full = fs::read(&log_path).unwrap();
    let all = read_log(&log_path).unwrap().records;
    let line_ends: Vec<usize> = full.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i + 1).collect();

    let mut rng = common::rng(9);
    for _ in 0..200 {
        let cut = rng.random_range(1..full.len());
        let cut_path = dir.path().join("cut.jsonl");
        fs::write(&cut_path, &full[..cut]).unwrap();
        let got = read_log(&cut_path).unwrap();
        // A line whose JSON is whole but lost only its newline still counts.
        let complete = line_ends.iter().filter(|&&e| e - 1 <= cut).count();
        assert_eq!(got.records.len(), complete);
        assert_eq!(got.truncated_tail, !line_ends.contains(&cut) && !line_ends.contains(&(cut + 1)));
        assert_eq!(got.records[..], all[..complete]);
        if complete > 0 {
            assert_eq!(replay(&got.records).unwrap(), replay(&all[..complete]).unwrap());
        }
    }
}

#[test]
fn corrupt_middle_line_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let hub = SessionHub::start(dir.path(), None, 1_000);
    drive(&hub, 3, 5);
    hub.flush();
    let text = fs::read_to_string(hub.status().session_dir.join("events.jsonl")).unwrap();
    let first_len = text.find('\n').unwrap() + 1;
    let bad = format!("{}{{not json\n{}", &text[..first_len], &text[first_len..]);
    let path = dir.path().join("bad.jsonl");
    fs::write(&path, bad).unwrap();
    match read_log(&path) {
        Err(Error::Parse { offset, .. }) => assert_eq!(offset, first_len as u64),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn newer_schema_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("future.json");
    let mut value = serde_json::to_value(busy_map(1, 5)).unwrap();
    value["schema_version"] = 99.into();
    fs::File::create(&path).unwrap().write_all(value.to_string().as_bytes()).unwrap();
    assert!(matches!(load_map(&path), Err(Error::Version { found: 99, .. })));
}

#[test]
fn reopened_session_keeps_counting() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("saved.json");
    let map = busy_map(5, 40);
    save_map(&map, &saved).unwrap();
    let cfg = ProxyConfig::new(dir.path());
    let hub = wayfinder::open_hub(&cfg, &SessionSource::Reopen(saved)).unwrap();
    assert_eq!(hub.snapshot(), map);
    let url = wayfinder::classify::CanonicalUrl::parse("http://new.test/").unwrap();
    let d = record_page(&hub, &url, None, None, map.clock() + 10).unwrap();
    assert_eq!(d.revision, map.revision + 1);
    hub.flush();
    let log = read_log(&hub.status().session_dir.join("events.jsonl")).unwrap();
    assert_eq!(replay(&log.records).unwrap(), hub.snapshot());
}
