use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::{EdgeKind, Millis, NodeId, SessionMap};
use crate::classify::CanonicalUrl;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    /// Ordered by first visit, then id.
    pub children: Vec<NodeId>,
    pub depth: usize,
    pub first_visit: Millis,
    pub url: Option<CanonicalUrl>,
    pub title: Option<String>,
    pub thumbnail_ref: Option<String>,
    pub opaque: bool,
    pub visit_count: u64,
    pub dwell_seconds: f64,
    /// Descendants removed by depth pruning.
    pub hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TreeEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
}

/// A parent for every node of a map, rooted at the session root.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpanningTree {
    pub revision: u64,
    pub root: NodeId,
    /// Pre-order, children visited in their stored order.
    nodes: Vec<TreeNode>,
    #[serde(skip)]
    index: HashMap<NodeId, usize>,
    /// Map edges that are not parent links.
    pub extra_edges: Vec<TreeEdge>,
}

impl SpanningTree {
    pub(crate) fn from_parts(
        revision: u64,
        root: NodeId,
        mut by_id: BTreeMap<NodeId, TreeNode>,
        extra_edges: Vec<TreeEdge>,
    ) -> Self {
        let mut nodes = Vec::with_capacity(by_id.len());
        let mut stack = vec![(root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let Some(mut node) = by_id.remove(&id) else { continue };
            node.depth = depth;
            for child in node.children.iter().rev() {
                stack.push((*child, depth + 1));
            }
            nodes.push(node);
        }
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        Self { revision, root, nodes, index, extra_edges }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&TreeNode> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.node(id).and_then(|n| n.parent)
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        self.node(id).map_or(&[], |n| n.children.as_slice())
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Parent-child pairs in pre-order.
    pub fn tree_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes.iter().filter_map(|n| n.parent.map(|p| (p, n.id)))
    }

    /// True when `ancestor` lies on the path from `id` to the root (inclusive).
    pub fn is_ancestor(&self, ancestor: NodeId, id: NodeId) -> bool {
        let mut cur = Some(id);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.parent(c);
        }
        false
    }

    /// Keeps nodes at depth ≤ `max_depth`; each kept node at the cut records
    /// how many descendants were dropped.
    pub fn prune_depth(&self, max_depth: usize) -> SpanningTree {
        let max_depth = max_depth.max(1);
        if self.height() <= max_depth {
            return self.clone();
        }
        let mut subtree = vec![1usize; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            for c in &self.nodes[i].children {
                subtree[i] += subtree[self.index[c]];
            }
        }
        let mut kept = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.depth > max_depth {
                continue;
            }
            let mut node = n.clone();
            if n.depth == max_depth {
                node.hidden += subtree[i] - 1;
                node.children.clear();
            }
            kept.insert(n.id, node);
        }
        let extra = self
            .extra_edges
            .iter()
            .filter(|e| kept.contains_key(&e.from) && kept.contains_key(&e.to))
            .cloned()
            .collect();
        SpanningTree::from_parts(self.revision, self.root, kept, extra)
    }
}

impl SessionMap {
    /// Parent of each page: its preferred manual parent, else the source of
    /// its earliest incoming `followed` edge from an older page, else the root.
    ///
    /// Restricting followed parents to older pages keeps them acyclic. A
    /// preferred parent that would still close a cycle (possible after the
    /// edge that made it safe was removed) is ignored.
    pub fn spanning_tree(&self) -> SpanningTree {
        let mut preferred: HashMap<NodeId, NodeId> = HashMap::new();
        let mut followed: HashMap<NodeId, (Millis, u64, NodeId)> = HashMap::new();
        for e in self.edges() {
            if e.to == self.root || !self.contains(e.from) {
                continue;
            }
            match e.kind {
                EdgeKind::Manual if e.preferred && e.from != e.to => {
                    preferred.insert(e.to, e.from);
                }
                EdgeKind::Followed if e.from != self.root && e.from < e.to => {
                    let cand = (e.first_traversal, e.edge_id.0, e.from);
                    followed
                        .entry(e.to)
                        .and_modify(|best| {
                            if cand < *best {
                                *best = cand;
                            }
                        })
                        .or_insert(cand);
                }
                _ => {}
            }
        }
        let fallback = |id: NodeId| followed.get(&id).map_or(self.root, |c| c.2);

        let mut parent: BTreeMap<NodeId, NodeId> = self
            .nodes()
            .iter()
            .map(|n| {
                let id = n.node_id;
                (id, preferred.get(&id).copied().unwrap_or_else(|| fallback(id)))
            })
            .collect();

        while let Some(cycle) = find_cycle(self.root, &parent) {
            let breaker = cycle
                .iter()
                .copied()
                .filter(|id| preferred.contains_key(id))
                .min()
                .expect("cycles only arise through preferred parents");
            preferred.remove(&breaker);
            parent.insert(breaker, fallback(breaker));
        }

        let mut by_id: BTreeMap<NodeId, TreeNode> = BTreeMap::new();
        by_id.insert(
            self.root,
            TreeNode {
                id: self.root,
                parent: None,
                children: Vec::new(),
                depth: 0,
                first_visit: self.started_at,
                url: None,
                title: None,
                thumbnail_ref: None,
                opaque: false,
                visit_count: 0,
                dwell_seconds: 0.0,
                hidden: 0,
            },
        );
        for n in self.nodes() {
            by_id.insert(
                n.node_id,
                TreeNode {
                    id: n.node_id,
                    parent: Some(parent[&n.node_id]),
                    children: Vec::new(),
                    depth: 0,
                    first_visit: n.first_visit,
                    url: Some(n.url.clone()),
                    title: n.title.clone(),
                    thumbnail_ref: n.thumbnail_ref.clone(),
                    opaque: n.opaque,
                    visit_count: n.visit_count,
                    dwell_seconds: n.dwell_seconds,
                    hidden: 0,
                },
            );
        }
        let mut children: BTreeMap<NodeId, Vec<(Millis, NodeId)>> = BTreeMap::new();
        for n in self.nodes() {
            children
                .entry(parent[&n.node_id])
                .or_default()
                .push((n.first_visit, n.node_id));
        }
        for (p, mut kids) in children {
            kids.sort();
            by_id.get_mut(&p).expect("parent exists").children =
                kids.into_iter().map(|(_, id)| id).collect();
        }

        let mut seen = BTreeSet::new();
        let mut extra_edges = Vec::new();
        for e in self.edges() {
            if e.from == e.to || parent.get(&e.to) == Some(&e.from) {
                continue;
            }
            if seen.insert((e.from, e.to)) {
                extra_edges.push(TreeEdge { from: e.from, to: e.to, kind: e.kind });
            }
        }

        SpanningTree::from_parts(self.revision, self.root, by_id, extra_edges)
    }
}

/// Some cycle of the parent function not passing through the root.
fn find_cycle(root: NodeId, parent: &BTreeMap<NodeId, NodeId>) -> Option<Vec<NodeId>> {
    // 1 = on the current walk, 2 = known to reach the root.
    let mut state: HashMap<NodeId, u8> = HashMap::new();
    state.insert(root, 2);
    for &start in parent.keys() {
        let mut walk = Vec::new();
        let mut cur = start;
        loop {
            match state.get(&cur) {
                Some(2) => break,
                Some(1) => {
                    let at = walk.iter().position(|&n| n == cur).expect("on walk");
                    return Some(walk[at..].to_vec());
                }
                _ => {
                    state.insert(cur, 1);
                    walk.push(cur);
                    cur = match parent.get(&cur) {
                        Some(&p) => p,
                        None => break,
                    };
                }
            }
        }
        for n in walk {
            state.insert(n, 2);
        }
    }
    None
}
