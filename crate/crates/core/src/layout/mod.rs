//! Planar drawings of the session tree at page or host granularity.

mod hosts;
mod tidy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, SessionMap, SpanningTree, TreeEdge, TreeNode};

pub use self::hosts::aggregate_hosts;
pub use self::tidy::tidy_x;

/// Label shown for the session root.
pub const ROOT_LABEL: &str = "session";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    #[default]
    Page,
    Host,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplayMode {
    #[default]
    Title,
    Url,
    Thumbnail,
}

impl std::str::FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "page" => Ok(Level::Page),
            "host" => Ok(Level::Host),
            _ => Err(Error::Config(format!("unknown level {s:?} (expected page or host)"))),
        }
    }
}

impl std::str::FromStr for DisplayMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "title" => Ok(DisplayMode::Title),
            "url" => Ok(DisplayMode::Url),
            "thumbnail" => Ok(DisplayMode::Thumbnail),
            _ => Err(Error::Config(format!("unknown display mode {s:?} (expected title, url or thumbnail)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutOptions {
    pub level: Level,
    pub max_depth: Option<usize>,
    pub display_mode: DisplayMode,
    pub node_width: f64,
    pub node_height: f64,
    pub h_gap: f64,
    pub v_gap: f64,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        Self {
            level: Level::Page,
            max_depth: None,
            display_mode: DisplayMode::Title,
            node_width: 160.0,
            node_height: 40.0,
            h_gap: 20.0,
            v_gap: 40.0,
        }
    }
}

impl LayoutOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.node_width) || !positive(self.node_height) {
            return Err(Error::Config("node box must have positive width and height".into()));
        }
        if !positive(self.h_gap) || !positive(self.v_gap) {
            return Err(Error::Config("gaps must be positive".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        Ok(())
    }

    /// Vertical distance between consecutive layers.
    pub fn layer_height(&self) -> f64 {
        self.node_height + self.v_gap
    }
}

/// One drawn node; `x`, `y` is the centre of its box.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Placement {
    pub node_id: NodeId,
    pub x: f64,
    pub y: f64,
    pub depth: usize,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<String>,
    pub opaque: bool,
    pub visit_count: u64,
    pub dwell_seconds: f64,
    /// Descendants hidden by depth pruning.
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub from: NodeId,
    pub to: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositionedLayout {
    pub revision: u64,
    pub level: Level,
    pub display_mode: DisplayMode,
    pub node_width: f64,
    pub node_height: f64,
    /// Pre-order, root first.
    pub placements: Vec<Placement>,
    pub tree_edges: Vec<Segment>,
    pub extra_edges: Vec<TreeEdge>,
    pub bounds: Bounds,
    /// The page the browser is on, when it is part of this view.
    pub current: Option<NodeId>,
}

impl PositionedLayout {
    pub fn placement(&self, id: NodeId) -> Option<&Placement> {
        self.placements.iter().find(|p| p.node_id == id)
    }
}

fn host_of(node: &TreeNode) -> Option<&str> {
    node.url.as_ref().map(|u| u.host())
}

fn label(node: &TreeNode, is_root: bool, mode: DisplayMode) -> String {
    if is_root {
        return ROOT_LABEL.to_owned();
    }
    let url = node.url.as_ref().map(ToString::to_string).unwrap_or_default();
    match mode {
        DisplayMode::Title => node.title.clone().unwrap_or(url),
        DisplayMode::Url => url,
        DisplayMode::Thumbnail => node
            .thumbnail_ref
            .clone()
            .or_else(|| host_of(node).map(str::to_owned))
            .unwrap_or(url),
    }
}

/// Places every node of `tree` on its depth layer.
///
/// Children keep the tree's order (first visit ascending). Boxes on one
/// layer are at least `h_gap` apart and each parent is centred over its
/// children, so tree edges never cross.
pub fn layout(tree: &SpanningTree, options: &LayoutOptions) -> PositionedLayout {
    let nodes = tree.nodes();
    let index: std::collections::HashMap<NodeId, usize> =
        nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let children: Vec<Vec<usize>> = nodes
        .iter()
        .map(|n| n.children.iter().map(|c| index[c]).collect())
        .collect();
    let xs = tidy_x(&children, options.node_width + options.h_gap);
    let placements: Vec<Placement> = nodes
        .iter()
        .zip(&xs)
        .map(|(n, &x)| Placement {
            node_id: n.id,
            x,
            y: n.depth as f64 * options.layer_height(),
            depth: n.depth,
            label: label(n, n.id == tree.root, options.display_mode),
            url: n.url.as_ref().map(ToString::to_string),
            title: n.title.clone(),
            thumbnail: n.thumbnail_ref.clone(),
            opaque: n.opaque,
            visit_count: n.visit_count,
            dwell_seconds: n.dwell_seconds,
            hidden: n.hidden,
        })
        .collect();
    let (hw, hh) = (options.node_width / 2.0, options.node_height / 2.0);
    let bounds = placements.iter().fold(
        Bounds { min_x: -hw, min_y: -hh, max_x: hw, max_y: hh },
        |b, p| Bounds {
            min_x: b.min_x.min(p.x - hw),
            min_y: b.min_y.min(p.y - hh),
            max_x: b.max_x.max(p.x + hw),
            max_y: b.max_y.max(p.y + hh),
        },
    );
    PositionedLayout {
        revision: tree.revision,
        level: options.level,
        display_mode: options.display_mode,
        node_width: options.node_width,
        node_height: options.node_height,
        placements,
        tree_edges: tree.tree_edges().map(|(from, to)| Segment { from, to }).collect(),
        extra_edges: tree.extra_edges.clone(),
        bounds,
        current: None,
    }
}

/// Full view pipeline: aggregate to the requested level, prune, lay out.
pub fn render_view(map: &SessionMap, options: &LayoutOptions) -> Result<PositionedLayout> {
    options.validate()?;
    let (tree, current) = match options.level {
        Level::Page => (map.spanning_tree(), map.current),
        Level::Host => {
            let hosts = aggregate_hosts(map);
            (hosts.spanning_tree(), hosts.current)
        }
    };
    let tree = match options.max_depth {
        Some(d) => tree.prune_depth(d),
        None => tree,
    };
    let mut out = layout(&tree, options);
    out.current = current.filter(|c| tree.node(*c).is_some());
    Ok(out)
}
