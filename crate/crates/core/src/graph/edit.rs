use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::{DeltaCause, EdgeId, EdgeKind, MapDelta, Millis, NavEdge, NodeId, PageNode, SessionMap};
use crate::classify::CanonicalUrl;
use crate::error::{Error, Result};

/// A user change to the map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditCommand {
    AddLink { from: NodeId, to: NodeId },
    RemoveLink { edge: EdgeId },
    RemoveNode { node: NodeId },
    Reparent { node: NodeId, new_parent: NodeId },
    SetTitle { node: NodeId, title: String },
    AttachThumbnail { node: NodeId, path: String },
}

impl SessionMap {
    fn require_page(&self, id: NodeId) -> Result<()> {
        if id == self.root {
            return Err(Error::InvalidEdit("the session root cannot be edited".into()));
        }
        if self.node(id).is_none() {
            return Err(Error::NodeNotFound(id));
        }
        Ok(())
    }

    fn require_node(&self, id: NodeId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::NodeNotFound(id))
        }
    }

    /// Applies a user edit. Rejected edits leave the map and its revision untouched.
    pub fn edit(&mut self, cmd: &EditCommand) -> Result<MapDelta> {
        match cmd {
            EditCommand::AddLink { from, to } => {
                self.require_node(*from)?;
                self.require_page(*to)?;
                let delta = self.begin_delta(DeltaCause::Edit);
                let id = self.ensure_manual_edge(*from, *to);
                Ok(self.finish_delta(delta, &[], &[id]))
            }
            EditCommand::RemoveLink { edge } => {
                if self.edge(*edge).is_none() {
                    return Err(Error::EdgeNotFound(*edge));
                }
                let mut delta = self.begin_delta(DeltaCause::Edit);
                self.remove_edge_entry(*edge);
                delta.edges_removed.push(*edge);
                Ok(self.finish_delta(delta, &[], &[]))
            }
            EditCommand::RemoveNode { node } => {
                self.require_page(*node)?;
                let mut delta = self.begin_delta(DeltaCause::Edit);
                let incident: Vec<EdgeId> = self
                    .edges()
                    .iter()
                    .filter(|e| e.from == *node || e.to == *node)
                    .map(|e| e.edge_id)
                    .collect();
                for id in &incident {
                    self.remove_edge_entry(*id);
                }
                self.remove_node_entry(*node);
                if self.current == Some(*node) {
                    self.current = None;
                }
                delta.edges_removed = incident;
                delta.nodes_removed.push(*node);
                Ok(self.finish_delta(delta, &[], &[]))
            }
            EditCommand::Reparent { node, new_parent } => {
                self.require_page(*node)?;
                self.require_node(*new_parent)?;
                let cycle = Error::Cycle { node: *node, parent: *new_parent };
                if node == new_parent {
                    return Err(cycle);
                }
                // Checked on a copy: the parent choice of other nodes can depend
                // on this one, so only the resulting tree can tell.
                let mut trial = self.clone();
                let touched = trial.set_preferred_parent(*node, *new_parent);
                if trial.spanning_tree().parent(*node) != Some(*new_parent) {
                    return Err(cycle);
                }
                let delta = self.begin_delta(DeltaCause::Edit);
                let touched_now = self.set_preferred_parent(*node, *new_parent);
                debug_assert_eq!(touched, touched_now);
                Ok(self.finish_delta(delta, &[], &touched_now))
            }
            EditCommand::SetTitle { node, title } => {
                self.require_page(*node)?;
                let delta = self.begin_delta(DeltaCause::Edit);
                let n = self.node_mut(*node).expect("checked");
                n.title = if n.opaque || title.trim().is_empty() {
                    None
                } else {
                    Some(title.clone())
                };
                Ok(self.finish_delta(delta, &[*node], &[]))
            }
            EditCommand::AttachThumbnail { node, path } => {
                self.require_page(*node)?;
                let delta = self.begin_delta(DeltaCause::Edit);
                self.node_mut(*node).expect("checked").thumbnail_ref =
                    (!path.is_empty()).then(|| path.clone());
                Ok(self.finish_delta(delta, &[*node], &[]))
            }
        }
    }

    fn ensure_manual_edge(&mut self, from: NodeId, to: NodeId) -> EdgeId {
        if let Some(id) = self.find_edge(from, to, EdgeKind::Manual) {
            return id;
        }
        let id = self.alloc_edge_id();
        let ts = self.clock();
        self.insert_edge(NavEdge {
            edge_id: id,
            from,
            to,
            kind: EdgeKind::Manual,
            traversal_count: 0,
            first_traversal: ts,
            preferred: false,
        });
        id
    }

    /// Makes `parent -> node` the node's only preferred manual edge.
    fn set_preferred_parent(&mut self, node: NodeId, parent: NodeId) -> Vec<EdgeId> {
        let target = self.ensure_manual_edge(parent, node);
        let mut touched = vec![target];
        let others: Vec<EdgeId> = self
            .edges()
            .iter()
            .filter(|e| e.to == node && e.preferred && e.edge_id != target)
            .map(|e| e.edge_id)
            .collect();
        for id in others {
            self.edge_mut(id).expect("listed").preferred = false;
            touched.push(id);
        }
        self.edge_mut(target).expect("ensured").preferred = true;
        touched.sort();
        touched
    }

    /// Builds a guided-tour map from pre-selected pages.
    ///
    /// Each distinct URL becomes one node (visit count 1, no dwell) and the
    /// list is chained with manual edges starting at the root. The edge that
    /// introduces a page is its preferred parent, so the tree follows the list.
    pub fn seed_from_list(
        urls: &[CanonicalUrl],
        session_id: Uuid,
        started_at: Millis,
        idle_threshold_ms: Option<u64>,
    ) -> Result<SessionMap> {
        if urls.is_empty() {
            return Err(Error::InvalidEdit("cannot seed a map from an empty list".into()));
        }
        let mut map = SessionMap::new(session_id, started_at, idle_threshold_ms);
        let mut prev = map.root;
        for url in urls {
            let (id, fresh) = match map.node_by_url(url) {
                Some(id) => (id, false),
                None => {
                    let id = map.alloc_node_id();
                    map.insert_node(PageNode {
                        node_id: id,
                        url: url.clone(),
                        title: None,
                        first_visit: started_at,
                        last_visit: started_at,
                        visit_count: 1,
                        dwell_seconds: 0.0,
                        thumbnail_ref: None,
                        opaque: false,
                    });
                    (id, true)
                }
            };
            if prev != id {
                let edge = map.ensure_manual_edge(prev, id);
                if fresh {
                    map.edge_mut(edge).expect("ensured").preferred = true;
                }
            }
            prev = id;
        }
        Ok(map)
    }
}
