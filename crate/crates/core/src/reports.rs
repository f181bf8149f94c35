//! Daily activity and per-session summaries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::Serialize;
use uuid::Uuid;

use crate::graph::{Millis, NodeId, SessionMap};
use crate::store::{EventLogRecord, RecordBody};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteTotals {
    pub host: String,
    pub visit_count: u64,
    pub dwell_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DailyReport {
    pub date: NaiveDate,
    pub utc_offset_minutes: i32,
    /// Sorted by host.
    pub per_site: Vec<SiteTotals>,
    pub total_events: u64,
    pub session_ids: Vec<Uuid>,
}

/// Calendar day of `ts` at `offset`.
pub fn local_date(ts: Millis, offset: FixedOffset) -> NaiveDate {
    DateTime::from_timestamp_millis(ts)
        .unwrap_or_default()
        .with_timezone(&offset)
        .date_naive()
}

/// One visit with the dwell it accrued before the next navigation (or the
/// session's end) in the same session.
#[derive(Clone, Debug, PartialEq)]
pub struct Visit {
    pub session_id: Uuid,
    pub ts: Millis,
    pub host: String,
    pub dwell_ms: u64,
}

/// Visits in log order. Dwell follows the map's rule: the gap to the next
/// navigation or finalize, clipped to the session's idle threshold. A visit
/// still open at the end of the log has no dwell yet. Edits are ignored.
pub fn visits(records: &[EventLogRecord]) -> Vec<Visit> {
    struct Open {
        visit: Option<usize>,
        since: Millis,
        cap: Option<u64>,
    }
    let mut out: Vec<Visit> = Vec::new();
    let mut sessions: HashMap<Uuid, Open> = HashMap::new();
    let close = |open: &mut Open, out: &mut Vec<Visit>, now: Millis| {
        if let Some(i) = open.visit.take() {
            let gap = now.saturating_sub(open.since).max(0) as u64;
            out[i].dwell_ms += open.cap.map_or(gap, |c| gap.min(c));
        }
    };
    for rec in records {
        let open = sessions
            .entry(rec.session_id)
            .or_insert(Open { visit: None, since: 0, cap: None });
        match &rec.body {
            RecordBody::SessionStart { started_at, idle_threshold_ms } => {
                *open = Open { visit: None, since: *started_at, cap: *idle_threshold_ms };
            }
            RecordBody::Snapshot { map } => {
                open.cap = map.idle_threshold_ms;
                open.visit = None;
            }
            RecordBody::Navigation(ev) => {
                let ts = ev.ts.max(open.since);
                close(open, &mut out, ts);
                out.push(Visit { session_id: rec.session_id, ts, host: ev.url.host().to_owned(), dwell_ms: 0 });
                open.visit = Some(out.len() - 1);
                open.since = ts;
            }
            RecordBody::Finalize => close(open, &mut out, rec.logged_at),
            RecordBody::Transaction(_) | RecordBody::Edit { .. } => {}
        }
    }
    out
}

/// Visits that started on `date` (local to `offset`), grouped by host.
/// A visit's whole dwell counts toward the day it started.
pub fn daily_report(records: &[EventLogRecord], date: NaiveDate, offset: FixedOffset) -> DailyReport {
    let mut per_site: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let mut sessions = BTreeSet::new();
    let mut total_events = 0;
    for v in visits(records) {
        if local_date(v.ts, offset) != date {
            continue;
        }
        total_events += 1;
        sessions.insert(v.session_id);
        let site = per_site.entry(v.host).or_default();
        site.0 += 1;
        site.1 += v.dwell_ms;
    }
    DailyReport {
        date,
        utc_offset_minutes: offset.local_minus_utc() / 60,
        per_site: per_site
            .into_iter()
            .map(|(host, (visit_count, ms))| SiteTotals { host, visit_count, dwell_seconds: ms as f64 / 1000.0 })
            .collect(),
        total_events,
        session_ids: sessions.into_iter().collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopPage {
    pub node_id: NodeId,
    pub url: String,
    pub title: Option<String>,
    pub dwell_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionSummary {
    pub session_id: Uuid,
    pub revision: u64,
    pub page_count: usize,
    pub edge_count: usize,
    pub visit_count: u64,
    pub total_dwell_seconds: f64,
    /// Up to ten pages by dwell, longest first; ties by node id.
    pub top_pages: Vec<TopPage>,
    /// `depth_histogram[d]` pages sit at depth `d + 1` of the spanning tree.
    pub depth_histogram: Vec<usize>,
}

pub const TOP_PAGES: usize = 10;

pub fn session_summary(map: &SessionMap) -> SessionSummary {
    let mut ranked: Vec<_> = map.nodes().iter().collect();
    ranked.sort_by(|a, b| b.dwell_seconds.total_cmp(&a.dwell_seconds).then(a.node_id.cmp(&b.node_id)));
    let tree = map.spanning_tree();
    let mut depth_histogram = vec![0usize; tree.height()];
    for n in tree.nodes().iter().filter(|n| n.depth > 0) {
        depth_histogram[n.depth - 1] += 1;
    }
    SessionSummary {
        session_id: map.session_id,
        revision: map.revision,
        page_count: map.nodes().len(),
        edge_count: map.edges().len(),
        visit_count: map.nodes().iter().map(|n| n.visit_count).sum(),
        total_dwell_seconds: map.total_dwell_seconds(),
        top_pages: ranked
            .into_iter()
            .take(TOP_PAGES)
            .map(|n| TopPage {
                node_id: n.node_id,
                url: n.url.to_string(),
                title: n.title.clone(),
                dwell_seconds: n.dwell_seconds,
            })
            .collect(),
        depth_histogram,
    }
}

fn hms(seconds: f64) -> String {
    let s = seconds.round() as u64;
    format!("{}:{:02}:{:02}", s / 3600, s / 60 % 60, s % 60)
}

/// Plain-text table of a daily report.
pub fn render_daily(report: &DailyReport) -> String {
    let mut out = String::new();
    let sign = if report.utc_offset_minutes < 0 { '-' } else { '+' };
    let off = report.utc_offset_minutes.unsigned_abs();
    let _ = writeln!(out, "Daily report for {} (UTC{sign}{:02}:{:02})", report.date, off / 60, off % 60);
    let width = report.per_site.iter().map(|s| s.host.chars().count()).max().unwrap_or(0).max(4);
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>9}", "site", "visits", "time");
    let _ = writeln!(out, "{}  {}  {}", "-".repeat(width), "-".repeat(6), "-".repeat(9));
    for s in &report.per_site {
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>9}", s.host, s.visit_count, hms(s.dwell_seconds));
    }
    let total: f64 = report.per_site.iter().map(|s| s.dwell_seconds).sum();
    let _ = writeln!(out, "{}  {}  {}", "-".repeat(width), "-".repeat(6), "-".repeat(9));
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>9}", "total", report.total_events, hms(total));
    let _ = writeln!(out, "sessions: {}", report.session_ids.len());
    out
}
