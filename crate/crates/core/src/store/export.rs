use std::fmt::Write;

use crate::graph::{EdgeKind, SessionMap};
use crate::layout::{PositionedLayout, ROOT_LABEL};

fn dot_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if c.is_control() => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

/// Graphviz digraph of the whole map, nodes then edges, each in id order.
/// Manual edges are dashed.
pub fn export_dot(map: &SessionMap) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"session {}\" {{", map.session_id);
    out.push_str("  node [shape=box];\n");
    let _ = writeln!(out, "  n{} [label=\"{}\", shape=ellipse];", map.root.0, ROOT_LABEL);
    for n in map.nodes() {
        let _ = writeln!(
            out,
            "  n{} [label=\"{}\", URL=\"{}\"];",
            n.node_id.0,
            dot_escape(&n.label()),
            dot_escape(&n.url.to_string())
        );
    }
    for e in map.edges() {
        let style = if e.kind == EdgeKind::Manual { ", style=dashed" } else { "" };
        let _ = writeln!(
            out,
            "  n{} -> n{} [kind=\"{}\", traversals={}{style}];",
            e.from.0,
            e.to.0,
            e.kind.as_str(),
            e.traversal_count
        );
    }
    out.push_str("}\n");
    out
}

/// XML text with markup characters escaped and characters XML 1.0 forbids dropped.
fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\t' | '\n' | '\r' => out.push(' '),
            c if (c as u32) < 0x20 || c == '\u{FFFE}' || c == '\u{FFFF}' => {}
            c => out.push(c),
        }
    }
    out
}

const MAX_LABEL_CHARS: usize = 24;

fn short_label(label: &str) -> String {
    if label.chars().count() <= MAX_LABEL_CHARS {
        label.to_owned()
    } else {
        let mut s: String = label.chars().take(MAX_LABEL_CHARS - 1).collect();
        s.push('…');
        s
    }
}

/// Standalone SVG drawing of a layout: a box and label per node, a solid
/// line per tree edge and a dashed line per extra edge. The viewBox is the
/// layout's bounding box.
pub fn export_svg(layout: &PositionedLayout) -> String {
    let b = layout.bounds;
    let (w, h) = (layout.node_width, layout.node_height);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"{} {} {} {}\" width=\"{}\" height=\"{}\">",
        b.min_x,
        b.min_y,
        b.width(),
        b.height(),
        b.width(),
        b.height()
    );
    let pos = |id| layout.placement(id).map(|p| (p.x, p.y));
    out.push_str("  <g stroke=\"#555\" stroke-width=\"1.5\">\n");
    for seg in &layout.tree_edges {
        if let (Some((x1, y1)), Some((x2, y2))) = (pos(seg.from), pos(seg.to)) {
            let _ = writeln!(
                out,
                "    <line x1=\"{x1}\" y1=\"{}\" x2=\"{x2}\" y2=\"{}\"/>",
                y1 + h / 2.0,
                y2 - h / 2.0
            );
        }
    }
    for e in &layout.extra_edges {
        if let (Some((x1, y1)), Some((x2, y2))) = (pos(e.from), pos(e.to)) {
            let _ = writeln!(
                out,
                "    <line x1=\"{x1}\" y1=\"{y1}\" x2=\"{x2}\" y2=\"{y2}\" stroke-dasharray=\"6 4\" class=\"{}\"/>",
                e.kind.as_str()
            );
        }
    }
    out.push_str("  </g>\n");
    for p in &layout.placements {
        let mut tip = p.title.clone().unwrap_or_default();
        if let Some(url) = &p.url {
            if !tip.is_empty() {
                tip.push(' ');
            }
            tip.push_str(url);
        }
        if tip.is_empty() {
            tip = p.label.clone();
        }
        let mut text = short_label(&p.label);
        if p.hidden > 0 {
            let _ = write!(text, " (+{})", p.hidden);
        }
        let fill = if layout.current == Some(p.node_id) { "#fde68a" } else { "#f8fafc" };
        let _ = writeln!(
            out,
            "  <g class=\"node\"><title>{}</title><rect x=\"{}\" y=\"{}\" width=\"{w}\" height=\"{h}\" rx=\"4\" fill=\"{fill}\" stroke=\"#334155\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" dominant-baseline=\"middle\">{}</text></g>",
            xml_escape(&tip),
            p.x - w / 2.0,
            p.y - h / 2.0,
            p.x,
            p.y,
            xml_escape(&text)
        );
    }
    out.push_str("</svg>\n");
    out
}
