use std::collections::BTreeMap;

use crate::graph::{EdgeKind, Millis, NavEdge, NodeId, PageNode, SessionMap};

#[derive(Default)]
struct EdgeAcc {
    followed: bool,
    jump: bool,
    traversal_count: u64,
    first_traversal: Millis,
    first_edge: u64,
}

/// Collapses pages into one node per host.
///
/// Visits and dwell are summed, each host node gets the host's root URL, and
/// host nodes are numbered in order of their earliest page. Edges between
/// different hosts are merged with their traversal counts summed; edges
/// within one host disappear. A merged edge is `followed` if any of its page
/// edges was, else `jump` if any was, else `manual`.
pub fn aggregate_hosts(map: &SessionMap) -> SessionMap {
    let mut out = SessionMap::new(map.session_id, map.started_at, map.idle_threshold_ms);
    out.revision = map.revision;

    let mut host_ids: BTreeMap<&str, NodeId> = BTreeMap::new();
    let mut page_host: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    page_host.insert(map.root, out.root);
    for page in map.nodes() {
        let host = page.url.host();
        let id = match host_ids.get(host) {
            Some(id) => *id,
            None => {
                let id = out.alloc_node_id();
                host_ids.insert(host, id);
                out.insert_node(PageNode {
                    node_id: id,
                    url: page.url.origin_root(),
                    title: None,
                    first_visit: page.first_visit,
                    last_visit: page.last_visit,
                    visit_count: 0,
                    dwell_seconds: 0.0,
                    thumbnail_ref: None,
                    opaque: true,
                });
                id
            }
        };
        let node = out.node_mut(id).expect("inserted above");
        node.first_visit = node.first_visit.min(page.first_visit);
        node.last_visit = node.last_visit.max(page.last_visit);
        node.visit_count += page.visit_count;
        node.dwell_seconds += page.dwell_seconds;
        node.opaque &= page.opaque;
        page_host.insert(page.node_id, id);
    }
    for page in map.nodes() {
        let node = out.node_mut(page_host[&page.node_id]).expect("host exists");
        if !node.opaque && node.title.is_none() {
            node.title = Some(page.url.host().to_owned());
        }
    }

    let mut merged: BTreeMap<(NodeId, NodeId), EdgeAcc> = BTreeMap::new();
    for e in map.edges() {
        let (Some(&from), Some(&to)) = (page_host.get(&e.from), page_host.get(&e.to)) else {
            continue;
        };
        if from == to {
            continue;
        }
        let acc = merged.entry((from, to)).or_insert_with(|| EdgeAcc {
            first_traversal: e.first_traversal,
            first_edge: e.edge_id.0,
            ..Default::default()
        });
        acc.followed |= e.kind == EdgeKind::Followed;
        acc.jump |= e.kind == EdgeKind::Jump;
        acc.traversal_count += e.traversal_count;
        acc.first_traversal = acc.first_traversal.min(e.first_traversal);
        acc.first_edge = acc.first_edge.min(e.edge_id.0);
    }
    let mut edges: Vec<((NodeId, NodeId), EdgeAcc)> = merged.into_iter().collect();
    edges.sort_by_key(|(_, acc)| acc.first_edge);
    for ((from, to), acc) in edges {
        let kind = if acc.followed {
            EdgeKind::Followed
        } else if acc.jump {
            EdgeKind::Jump
        } else {
            EdgeKind::Manual
        };
        let edge_id = out.alloc_edge_id();
        out.insert_edge(NavEdge {
            edge_id,
            from,
            to,
            kind,
            traversal_count: acc.traversal_count,
            first_traversal: acc.first_traversal,
            preferred: false,
        });
    }
    out.current = map.current.and_then(|c| page_host.get(&c).copied());
    out
}
