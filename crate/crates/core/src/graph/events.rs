use super::{
    DeltaCause, EdgeId, EdgeKind, MapDelta, Millis, NavEdge, NavigationEvent, NodeId, PageNode,
    SessionMap,
};

impl SessionMap {
    /// Gap charged to the current page when the user leaves it at `now`.
    fn dwell_gap_ms(&self, since: Millis, now: Millis) -> u64 {
        let gap = now.saturating_sub(since).max(0) as u64;
        match self.idle_threshold_ms {
            Some(cap) => gap.min(cap),
            None => gap,
        }
    }

    /// Closes dwell on the current page without moving anywhere.
    fn close_dwell(&mut self, now: Millis) -> Option<NodeId> {
        let current = self.current?;
        let since = self.node(current)?.last_visit;
        let gap = self.dwell_gap_ms(since, now);
        let node = self.node_mut(current)?;
        node.dwell_seconds += gap as f64 / 1000.0;
        Some(current)
    }

    /// Folds one navigation into the map.
    ///
    /// The page becomes (or merges into) a node; the traversal is recorded as
    /// a `followed` edge from the referring page when that page is on the map,
    /// otherwise as a `jump` from the root. Time since the previous navigation
    /// is charged to the page the user was on.
    pub fn apply_event(&mut self, event: &NavigationEvent) -> MapDelta {
        let delta = self.begin_delta(DeltaCause::Event { txn_id: event.txn_id });
        let mut touched_nodes = Vec::with_capacity(2);
        let ts = event.ts.max(self.started_at);

        if let Some(prev) = self.close_dwell(ts) {
            touched_nodes.push(prev);
        }

        let title = if event.opaque { None } else { event.title.clone() };
        let node_id = match self.node_by_url(&event.url) {
            Some(id) => {
                let node = self.node_mut(id).expect("indexed node exists");
                node.visit_count += 1;
                node.last_visit = node.last_visit.max(ts);
                if title.is_some() {
                    node.title = title;
                }
                id
            }
            None => {
                let id = self.alloc_node_id();
                self.insert_node(PageNode {
                    node_id: id,
                    url: event.url.clone(),
                    title,
                    first_visit: ts,
                    last_visit: ts,
                    visit_count: 1,
                    dwell_seconds: 0.0,
                    thumbnail_ref: None,
                    opaque: event.opaque,
                });
                id
            }
        };
        touched_nodes.push(node_id);

        let source = event
            .referer
            .as_ref()
            .and_then(|r| self.node_by_url(r))
            .filter(|&from| from != node_id);
        let (from, kind) = match source {
            Some(from) => (from, EdgeKind::Followed),
            None => (self.root, EdgeKind::Jump),
        };
        let edge_id = self.record_traversal(from, node_id, kind, ts);

        self.current = Some(node_id);
        self.finish_delta(delta, &touched_nodes, &[edge_id])
    }

    fn record_traversal(&mut self, from: NodeId, to: NodeId, kind: EdgeKind, ts: Millis) -> EdgeId {
        if let Some(id) = self.find_edge(from, to, kind) {
            let edge = self.edge_mut(id).expect("indexed edge exists");
            edge.traversal_count += 1;
            return id;
        }
        let id = self.alloc_edge_id();
        self.insert_edge(NavEdge {
            edge_id: id,
            from,
            to,
            kind,
            traversal_count: 1,
            first_traversal: ts,
            preferred: false,
        });
        id
    }

    /// Charges the open dwell interval to the current page and clears it.
    ///
    /// Returns `None`, without bumping the revision, when no page is current.
    pub fn finalize_dwell(&mut self, now: Millis) -> Option<MapDelta> {
        self.current?;
        let delta = self.begin_delta(DeltaCause::Finalize);
        let closed = self.close_dwell(now);
        self.current = None;
        Some(self.finish_delta(delta, &closed.into_iter().collect::<Vec<_>>(), &[]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::CanonicalUrl;
    use uuid::Uuid;

    fn url(s: &str) -> CanonicalUrl {
        CanonicalUrl::parse(&format!("http://a.test/{s}")).unwrap()
    }

    fn ev(ts: Millis, to: &str, from: Option<&str>, txn: u64) -> NavigationEvent {
        NavigationEvent {
            ts,
            url: url(to),
            referer: from.map(url),
            title: None,
            opaque: false,
            txn_id: txn,
            since_last_ms: None,
        }
    }

    fn map(cap_secs: u64) -> SessionMap {
        SessionMap::new(Uuid::nil(), 0, Some(cap_secs * 1000))
    }

    #[test]
    fn first_visit_is_a_jump_from_root() {
        let mut m = map(300);
        let d = m.apply_event(&ev(0, "A", None, 1));
        assert_eq!(m.node_count(), 2);
        let a = m.node_by_url(&url("A")).unwrap();
        assert_eq!(m.edges().len(), 1);
        let e = &m.edges()[0];
        assert_eq!((e.from, e.to, e.kind), (m.root, a, EdgeKind::Jump));
        assert_eq!(m.current, Some(a));
        assert_eq!(d.revision, 1);
        assert_eq!(d.cause, DeltaCause::Event { txn_id: 1 });
    }

    #[test]
    fn followed_link_charges_dwell() {
        let mut m = map(300);
        m.apply_event(&ev(0, "A", None, 1));
        m.apply_event(&ev(12_500, "B", Some("A"), 2));
        let a = m.node_by_url(&url("A")).unwrap();
        let b = m.node_by_url(&url("B")).unwrap();
        assert_eq!(m.node(a).unwrap().dwell_seconds, 12.5);
        let e = m.find_edge(a, b, EdgeKind::Followed).unwrap();
        assert_eq!(m.edge(e).unwrap().traversal_count, 1);
        assert_eq!(m.current, Some(b));
    }

    #[test]
    fn revisit_merges() {
        let mut m = map(300);
        m.apply_event(&ev(0, "A", None, 1));
        m.apply_event(&ev(1000, "B", Some("A"), 2));
        m.apply_event(&ev(2000, "A", Some("B"), 3));
        assert_eq!(m.node_count(), 3);
        let a = m.node_by_url(&url("A")).unwrap();
        let b = m.node_by_url(&url("B")).unwrap();
        assert_eq!(m.node(a).unwrap().visit_count, 2);
        assert!(m.find_edge(b, a, EdgeKind::Followed).is_some());
    }

    #[test]
    fn off_map_or_self_referer_is_a_jump() {
        let mut m = map(300);
        m.apply_event(&ev(0, "A", Some("elsewhere"), 1));
        m.apply_event(&ev(10, "A", Some("A"), 2));
        let a = m.node_by_url(&url("A")).unwrap();
        let jump = m.find_edge(m.root, a, EdgeKind::Jump).unwrap();
        assert_eq!(m.edge(jump).unwrap().traversal_count, 2);
        m.validate().unwrap();
    }

    #[test]
    fn finalize_below_cap() {
        let mut m = map(300);
        m.apply_event(&ev(0, "A", None, 1));
        m.finalize_dwell(30_000).unwrap();
        let a = m.node_by_url(&url("A")).unwrap();
        assert_eq!(m.node(a).unwrap().dwell_seconds, 30.0);
        assert_eq!(m.current, None);
    }

    #[test]
    fn finalize_caps_idle_gap() {
        let mut m = map(300);
        m.apply_event(&ev(0, "A", None, 1));
        m.finalize_dwell(1_000_000).unwrap();
        let a = m.node_by_url(&url("A")).unwrap();
        assert_eq!(m.node(a).unwrap().dwell_seconds, 300.0);
    }

    #[test]
    fn finalize_is_idempotent() {
        let mut m = map(300);
        m.apply_event(&ev(0, "A", None, 1));
        m.finalize_dwell(30_000).unwrap();
        let rev = m.revision;
        assert!(m.finalize_dwell(60_000).is_none());
        assert_eq!(m.revision, rev);
        assert_eq!(m.total_dwell_seconds(), 30.0);
    }

    #[test]
    fn opaque_events_carry_no_title() {
        let mut m = map(300);
        let mut e = ev(0, "A", None, 1);
        e.opaque = true;
        e.title = Some("ignored".into());
        m.apply_event(&e);
        assert_eq!(m.nodes()[0].title, None);
        m.validate().unwrap();
    }

    #[test]
    fn deltas_rebuild_the_map() {
        let mut m = map(300);
        let mut replica = m.clone();
        let evs = [
            ev(0, "A", None, 1),
            ev(500, "B", Some("A"), 2),
            ev(900, "C", Some("B"), 3),
            ev(1500, "A", Some("C"), 4),
        ];
        for e in &evs {
            let d = m.apply_event(e);
            replica.apply_delta(&d);
            assert_eq!(replica, m);
        }
        let d = m.finalize_dwell(4000).unwrap();
        replica.apply_delta(&d);
        assert_eq!(replica, m);
    }
}
