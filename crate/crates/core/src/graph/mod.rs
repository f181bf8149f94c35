//! The session's navigation map: visited pages, the traversals between them
//! and the time spent on each.
//!
//! A [`SessionMap`] has a single writer. Every mutation bumps the revision
//! and returns a [`MapDelta`] carrying the full post-state of everything it
//! touched, so a reader holding revision `r` reaches `r + 1` by applying one
//! delta.

mod edit;
mod events;
mod tree;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::classify::CanonicalUrl;

pub use self::edit::EditCommand;
pub use self::tree::{SpanningTree, TreeEdge, TreeNode};

pub const SCHEMA_VERSION: u32 = 1;

/// The virtual node that stands for the start of the session.
pub const ROOT: NodeId = NodeId(0);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// Milliseconds since the Unix epoch.
pub type Millis = i64;

/// One observed page visit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavigationEvent {
    pub ts: Millis,
    pub url: CanonicalUrl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub referer: Option<CanonicalUrl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default)]
    pub opaque: bool,
    pub txn_id: u64,
    /// Time since the same address was last requested, when it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub since_last_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageNode {
    pub node_id: NodeId,
    pub url: CanonicalUrl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub first_visit: Millis,
    pub last_visit: Millis,
    pub visit_count: u64,
    pub dwell_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail_ref: Option<String>,
    #[serde(default)]
    pub opaque: bool,
}

impl PageNode {
    /// Title if known, otherwise the URL.
    pub fn label(&self) -> String {
        self.title.clone().unwrap_or_else(|| self.url.to_string())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    /// The user clicked a link: the request carried the source page as referer.
    Followed,
    /// The page was reached without a usable referer.
    Jump,
    /// Added by the user or by seeding.
    Manual,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Followed => "followed",
            EdgeKind::Jump => "jump",
            EdgeKind::Manual => "manual",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavEdge {
    pub edge_id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    pub traversal_count: u64,
    pub first_traversal: Millis,
    /// Marks the manual edge chosen as the target's tree parent.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub preferred: bool,
}

/// What caused a revision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaCause {
    Event { txn_id: u64 },
    Edit,
    Finalize,
}

/// Post-state of everything one mutation touched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapDelta {
    pub revision: u64,
    pub cause: DeltaCause,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes_upserted: Vec<PageNode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges_upserted: Vec<NavEdge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes_removed: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges_removed: Vec<EdgeId>,
    pub current: Option<NodeId>,
    pub next_node_id: u64,
    pub next_edge_id: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "SessionMapRepr", into = "SessionMapRepr")]
pub struct SessionMap {
    pub schema_version: u32,
    pub session_id: Uuid,
    pub started_at: Millis,
    pub revision: u64,
    /// Dwell gaps are clipped to this many milliseconds; `None` means no cap.
    pub idle_threshold_ms: Option<u64>,
    pub root: NodeId,
    pub current: Option<NodeId>,
    nodes: Vec<PageNode>,
    edges: Vec<NavEdge>,
    next_node_id: u64,
    next_edge_id: u64,
    url_index: HashMap<CanonicalUrl, NodeId>,
    edge_index: HashMap<(NodeId, NodeId, EdgeKind), EdgeId>,
}

#[derive(Serialize, Deserialize)]
struct SessionMapRepr {
    schema_version: u32,
    session_id: Uuid,
    started_at: Millis,
    revision: u64,
    idle_threshold_ms: Option<u64>,
    root: NodeId,
    current: Option<NodeId>,
    next_node_id: u64,
    next_edge_id: u64,
    nodes: Vec<PageNode>,
    edges: Vec<NavEdge>,
}

impl From<SessionMapRepr> for SessionMap {
    fn from(r: SessionMapRepr) -> Self {
        let mut map = SessionMap {
            schema_version: r.schema_version,
            session_id: r.session_id,
            started_at: r.started_at,
            revision: r.revision,
            idle_threshold_ms: r.idle_threshold_ms,
            root: r.root,
            current: r.current,
            nodes: r.nodes,
            edges: r.edges,
            next_node_id: r.next_node_id,
            next_edge_id: r.next_edge_id,
            url_index: HashMap::new(),
            edge_index: HashMap::new(),
        };
        map.nodes.sort_by_key(|n| n.node_id);
        map.edges.sort_by_key(|e| e.edge_id);
        map.reindex();
        map
    }
}

impl From<SessionMap> for SessionMapRepr {
    fn from(m: SessionMap) -> Self {
        SessionMapRepr {
            schema_version: m.schema_version,
            session_id: m.session_id,
            started_at: m.started_at,
            revision: m.revision,
            idle_threshold_ms: m.idle_threshold_ms,
            root: m.root,
            current: m.current,
            next_node_id: m.next_node_id,
            next_edge_id: m.next_edge_id,
            nodes: m.nodes,
            edges: m.edges,
        }
    }
}

impl SessionMap {
    pub fn new(session_id: Uuid, started_at: Millis, idle_threshold_ms: Option<u64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            session_id,
            started_at,
            revision: 0,
            idle_threshold_ms,
            root: ROOT,
            current: None,
            nodes: Vec::new(),
            edges: Vec::new(),
            next_node_id: ROOT.0 + 1,
            next_edge_id: 1,
            url_index: HashMap::new(),
            edge_index: HashMap::new(),
        }
    }

    /// Page nodes in id order. The root is virtual and not included.
    pub fn nodes(&self) -> &[PageNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[NavEdge] {
        &self.edges
    }

    /// Number of nodes including the root.
    pub fn node_count(&self) -> usize {
        self.nodes.len() + 1
    }

    pub fn node(&self, id: NodeId) -> Option<&PageNode> {
        self.nodes
            .binary_search_by_key(&id, |n| n.node_id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Option<&mut PageNode> {
        self.nodes
            .binary_search_by_key(&id, |n| n.node_id)
            .ok()
            .map(|i| &mut self.nodes[i])
    }

    pub fn edge(&self, id: EdgeId) -> Option<&NavEdge> {
        self.edges
            .binary_search_by_key(&id, |e| e.edge_id)
            .ok()
            .map(|i| &self.edges[i])
    }

    pub(crate) fn edge_mut(&mut self, id: EdgeId) -> Option<&mut NavEdge> {
        self.edges
            .binary_search_by_key(&id, |e| e.edge_id)
            .ok()
            .map(|i| &mut self.edges[i])
    }

    pub fn node_by_url(&self, url: &CanonicalUrl) -> Option<NodeId> {
        self.url_index.get(url).copied()
    }

    pub fn find_edge(&self, from: NodeId, to: NodeId, kind: EdgeKind) -> Option<EdgeId> {
        self.edge_index.get(&(from, to, kind)).copied()
    }

    /// True for the root and every page node.
    pub fn contains(&self, id: NodeId) -> bool {
        id == self.root || self.node(id).is_some()
    }

    pub fn total_dwell_seconds(&self) -> f64 {
        self.nodes.iter().map(|n| n.dwell_seconds).sum()
    }

    /// Latest timestamp the map has seen.
    pub fn clock(&self) -> Millis {
        self.nodes
            .iter()
            .map(|n| n.last_visit)
            .max()
            .unwrap_or(self.started_at)
            .max(self.started_at)
    }

    pub(crate) fn insert_node(&mut self, node: PageNode) {
        self.url_index.insert(node.url.clone(), node.node_id);
        match self.nodes.binary_search_by_key(&node.node_id, |n| n.node_id) {
            Ok(i) => self.nodes[i] = node,
            Err(i) => self.nodes.insert(i, node),
        }
    }

    pub(crate) fn insert_edge(&mut self, edge: NavEdge) {
        self.edge_index.insert((edge.from, edge.to, edge.kind), edge.edge_id);
        match self.edges.binary_search_by_key(&edge.edge_id, |e| e.edge_id) {
            Ok(i) => self.edges[i] = edge,
            Err(i) => self.edges.insert(i, edge),
        }
    }

    pub(crate) fn remove_node_entry(&mut self, id: NodeId) -> Option<PageNode> {
        let i = self.nodes.binary_search_by_key(&id, |n| n.node_id).ok()?;
        let node = self.nodes.remove(i);
        self.url_index.remove(&node.url);
        Some(node)
    }

    pub(crate) fn remove_edge_entry(&mut self, id: EdgeId) -> Option<NavEdge> {
        let i = self.edges.binary_search_by_key(&id, |e| e.edge_id).ok()?;
        let edge = self.edges.remove(i);
        self.edge_index.remove(&(edge.from, edge.to, edge.kind));
        Some(edge)
    }

    pub(crate) fn alloc_node_id(&mut self) -> NodeId {
        let id = NodeId(self.next_node_id);
        self.next_node_id += 1;
        id
    }

    pub(crate) fn alloc_edge_id(&mut self) -> EdgeId {
        let id = EdgeId(self.next_edge_id);
        self.next_edge_id += 1;
        id
    }

    fn reindex(&mut self) {
        self.url_index = self.nodes.iter().map(|n| (n.url.clone(), n.node_id)).collect();
        self.edge_index = self
            .edges
            .iter()
            .map(|e| ((e.from, e.to, e.kind), e.edge_id))
            .collect();
    }

    /// Starts a delta for the next revision; `finish_delta` fills the tail.
    pub(crate) fn begin_delta(&mut self, cause: DeltaCause) -> MapDelta {
        self.revision += 1;
        MapDelta {
            revision: self.revision,
            cause,
            nodes_upserted: Vec::new(),
            edges_upserted: Vec::new(),
            nodes_removed: Vec::new(),
            edges_removed: Vec::new(),
            current: None,
            next_node_id: 0,
            next_edge_id: 0,
        }
    }

    /// Records final states of the touched ids, deduplicated, in id order.
    pub(crate) fn finish_delta(
        &self,
        mut delta: MapDelta,
        touched_nodes: &[NodeId],
        touched_edges: &[EdgeId],
    ) -> MapDelta {
        let mut nodes: Vec<NodeId> = touched_nodes.to_vec();
        nodes.sort();
        nodes.dedup();
        delta.nodes_upserted = nodes.iter().filter_map(|id| self.node(*id).cloned()).collect();
        let mut edges: Vec<EdgeId> = touched_edges.to_vec();
        edges.sort();
        edges.dedup();
        delta.edges_upserted = edges.iter().filter_map(|id| self.edge(*id).cloned()).collect();
        delta.nodes_removed.sort();
        delta.edges_removed.sort();
        delta.current = self.current;
        delta.next_node_id = self.next_node_id;
        delta.next_edge_id = self.next_edge_id;
        delta
    }

    /// Brings a snapshot at `delta.revision - 1` to `delta.revision`.
    pub fn apply_delta(&mut self, delta: &MapDelta) {
        for id in &delta.edges_removed {
            self.remove_edge_entry(*id);
        }
        for id in &delta.nodes_removed {
            self.remove_node_entry(*id);
        }
        for node in &delta.nodes_upserted {
            if let Some(old) = self.node(node.node_id) {
                let old_url = old.url.clone();
                self.url_index.remove(&old_url);
            }
            self.insert_node(node.clone());
        }
        for edge in &delta.edges_upserted {
            if let Some(old) = self.edge(edge.edge_id) {
                let old_key = (old.from, old.to, old.kind);
                self.edge_index.remove(&old_key);
            }
            self.insert_edge(edge.clone());
        }
        self.current = delta.current;
        self.next_node_id = delta.next_node_id;
        self.next_edge_id = delta.next_edge_id;
        self.revision = delta.revision;
    }

    /// Checks the structural invariants; used by tests and after loading.
    pub fn validate(&self) -> Result<(), String> {
        let mut urls = std::collections::HashSet::new();
        for n in &self.nodes {
            if n.node_id == self.root {
                return Err("page node uses the root id".into());
            }
            if !urls.insert(&n.url) {
                return Err(format!("duplicate url {}", n.url));
            }
            if n.last_visit < n.first_visit {
                return Err(format!("{}: last_visit before first_visit", n.node_id));
            }
            if n.visit_count < 1 {
                return Err(format!("{}: visit_count below 1", n.node_id));
            }
            if n.dwell_seconds.is_nan() || n.dwell_seconds < 0.0 {
                return Err(format!("{}: negative dwell", n.node_id));
            }
            if n.opaque && n.title.is_some() {
                return Err(format!("{}: opaque node with title", n.node_id));
            }
            if n.node_id.0 >= self.next_node_id {
                return Err(format!("{}: id beyond allocator", n.node_id));
            }
        }
        let mut keys = std::collections::HashSet::new();
        for e in &self.edges {
            if !self.contains(e.from) || !self.contains(e.to) {
                return Err(format!("{}: dangling endpoint", e.edge_id));
            }
            if !keys.insert((e.from, e.to, e.kind)) {
                return Err(format!("{}: duplicate (from, to, kind)", e.edge_id));
            }
            if e.kind == EdgeKind::Followed && e.from == e.to {
                return Err(format!("{}: followed self-loop", e.edge_id));
            }
            if e.kind != EdgeKind::Manual && e.traversal_count < 1 {
                return Err(format!("{}: traversal_count below 1", e.edge_id));
            }
            if e.edge_id.0 >= self.next_edge_id {
                return Err(format!("{}: id beyond allocator", e.edge_id));
            }
        }
        if let Some(c) = self.current {
            if self.node(c).is_none() {
                return Err(format!("current {c} does not exist"));
            }
        }
        Ok(())
    }
}
