#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

use wayfinder::classify::CanonicalUrl;
use wayfinder::graph::{Millis, NavigationEvent, SessionMap};
use wayfinder::layout::PositionedLayout;
use wayfinder::{ProxyConfig, Services, SessionSource};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Local origin server

#[derive(Clone, Debug)]
pub struct Canned {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    pub chunked: bool,
}

impl Canned {
    pub fn html(title: &str, links: &[String]) -> Self {
        let mut body = format!("<!doctype html><html><head><title>{title}</title></head><body>");
        for l in links {
            body.push_str(&format!("<a href=\"{l}\">{l}</a>\n"));
        }
        body.push_str("</body></html>");
        Self {
            status: 200,
            headers: vec![("Content-Type".into(), "text/html; charset=utf-8".into())],
            body: body.into_bytes(),
            chunked: false,
        }
    }

    pub fn bytes(body: Vec<u8>, chunked: bool) -> Self {
        Self {
            status: 200,
            headers: vec![("Content-Type".into(), "application/octet-stream".into())],
            body,
            chunked,
        }
    }
}

/// Minimal HTTP/1.1 origin: answers each connection's first request from a
/// fixed table and closes. Chunked bodies use uneven chunk sizes.
pub struct Origin {
    pub addr: SocketAddr,
    pub requests: Arc<Mutex<Vec<String>>>,
    routes: Arc<Mutex<HashMap<String, Canned>>>,
}

impl Origin {
    pub async fn start() -> Origin {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let routes: Arc<Mutex<HashMap<String, Canned>>> = Arc::default();
        let requests: Arc<Mutex<Vec<String>>> = Arc::default();
        let (r, q) = (routes.clone(), requests.clone());
        tokio::spawn(async move {
            loop {
                let Ok((sock, _)) = listener.accept().await else { return };
                let (r, q) = (r.clone(), q.clone());
                tokio::spawn(async move {
                    let _ = serve_one(sock, r, q).await;
                });
            }
        });
        Origin { addr, requests, routes }
    }

    pub fn route(&self, path: &str, canned: Canned) {
        self.routes.lock().unwrap().insert(path.to_owned(), canned);
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

async fn serve_one(
    mut sock: TcpStream,
    routes: Arc<Mutex<HashMap<String, Canned>>>,
    log: Arc<Mutex<Vec<String>>>,
) -> std::io::Result<()> {
    let mut head = Vec::new();
    let mut byte = [0u8; 1];
    while !head.ends_with(b"\r\n\r\n") {
        if sock.read(&mut byte).await? == 0 {
            return Ok(());
        }
        head.push(byte[0]);
    }
    let head = String::from_utf8_lossy(&head).into_owned();
    let path = head.split(' ').nth(1).unwrap_or("/").to_owned();
    log.lock().unwrap().push(head);
    let canned = routes.lock().unwrap().get(&path).cloned().unwrap_or(Canned {
        status: 404,
        headers: vec![("Content-Type".into(), "text/plain".into())],
        body: b"no such path".to_vec(),
        chunked: false,
    });
    let mut out = format!("HTTP/1.1 {} X\r\n", canned.status);
    for (k, v) in &canned.headers {
        out.push_str(&format!("{k}: {v}\r\n"));
    }
    if canned.chunked {
        out.push_str("Transfer-Encoding: chunked\r\n");
    } else {
        out.push_str(&format!("Content-Length: {}\r\n", canned.body.len()));
    }
    out.push_str("Connection: close\r\n\r\n");
    sock.write_all(out.as_bytes()).await?;
    if canned.chunked {
        let sizes = [1usize, 7, 4096, 65_536, 100_003, 13];
        let (mut pos, mut i) = (0, 0);
        while pos < canned.body.len() {
            let n = sizes[i % sizes.len()].min(canned.body.len() - pos);
            sock.write_all(format!("{n:X};ext=1\r\n").as_bytes()).await?;
            sock.write_all(&canned.body[pos..pos + n]).await?;
            sock.write_all(b"\r\n").await?;
            pos += n;
            i += 1;
        }
        sock.write_all(b"0\r\nX-Trailer: t\r\n\r\n").await?;
    } else {
        sock.write_all(&canned.body).await?;
    }
    sock.shutdown().await
}

// ---------------------------------------------------------------------------
// Clients

pub fn proxied_client(proxy: SocketAddr) -> reqwest::Client {
    reqwest::Client::builder()
        .proxy(reqwest::Proxy::http(format!("http://{proxy}")).unwrap())
        .build()
        .unwrap()
}

pub fn direct_client() -> reqwest::Client {
    reqwest::Client::builder().no_proxy().build().unwrap()
}

/// Sends raw bytes and reads until the peer closes.
pub async fn raw_exchange(addr: SocketAddr, request: &[u8]) -> Vec<u8> {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(request).await.unwrap();
    let mut out = Vec::new();
    s.read_to_end(&mut out).await.unwrap();
    out
}

/// Splits a raw response into head text and decoded body. Written
/// independently of the proxy's own framing code.
pub fn parse_raw_response(raw: &[u8]) -> (String, Vec<u8>, usize) {
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("complete head") + 4;
    let head = String::from_utf8_lossy(&raw[..split]).into_owned();
    let lower = head.to_ascii_lowercase();
    let rest = &raw[split..];
    if lower.contains("transfer-encoding: chunked") {
        let mut body = Vec::new();
        let mut i = 0;
        loop {
            let eol = i + rest[i..].windows(2).position(|w| w == b"\r\n").unwrap();
            let line = std::str::from_utf8(&rest[i..eol]).unwrap();
            let n = usize::from_str_radix(line.split(';').next().unwrap().trim(), 16).unwrap();
            i = eol + 2;
            if n == 0 {
                let end = i + rest[i..].windows(2).position(|w| w == b"\r\n").unwrap() + 2;
                return (head, body, split + end);
            }
            body.extend_from_slice(&rest[i..i + n]);
            i += n + 2;
        }
    }
    if let Some(cl) = lower.lines().find_map(|l| l.strip_prefix("content-length: ")) {
        let n: usize = cl.trim().parse().unwrap();
        return (head, rest[..n].to_vec(), split + n);
    }
    (head, rest.to_vec(), raw.len())
}

// ---------------------------------------------------------------------------
// Running services

pub async fn start_services(data_dir: &std::path::Path) -> Services {
    let mut cfg = ProxyConfig::new(data_dir);
    cfg.listen_address = "127.0.0.1:0".parse().unwrap();
    cfg.control_address = "127.0.0.1:0".parse().unwrap();
    let hub = wayfinder::open_hub(&cfg, &SessionSource::Fresh).unwrap();
    wayfinder::start(&cfg, hub).await.unwrap()
}

// ---------------------------------------------------------------------------
// Random navigation

pub fn page_url(host: usize, page: usize) -> CanonicalUrl {
    CanonicalUrl::parse(&format!("http://h{host}.test/p/{page}")).unwrap()
}

/// A random browsing trace: mostly link-following with revisits, some
/// typed-in jumps, referers that were never seen and self-referers.
pub fn random_events(rng: &mut StdRng, n: usize, start: Millis) -> Vec<NavigationEvent> {
    let hosts = rng.random_range(1..5);
    let pages = rng.random_range(1..40);
    let mut visited: Vec<CanonicalUrl> = Vec::new();
    let mut ts = start;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        ts += rng.random_range(0..120_000);
        let url = page_url(rng.random_range(0..hosts), rng.random_range(0..pages));
        let referer = match rng.random_range(0..10) {
            0..=5 if !visited.is_empty() => Some(visited[rng.random_range(0..visited.len())].clone()),
            6 => Some(page_url(99, rng.random_range(0..5))),
            7 => Some(url.clone()),
            _ => None,
        };
        visited.push(url.clone());
        out.push(NavigationEvent {
            ts,
            url,
            referer,
            title: rng.random_bool(0.7).then(|| format!("title {i}")),
            opaque: false,
            txn_id: i as u64 + 1,
            since_last_ms: None,
        });
    }
    out
}

/// Expected counts computed straight from the event list.
pub struct GraphOracle {
    pub visits: BTreeMap<String, u64>,
    /// (from url or "ROOT", to url, kind) → traversals.
    pub edges: BTreeMap<(String, String, &'static str), u64>,
}

pub fn graph_oracle(events: &[NavigationEvent]) -> GraphOracle {
    let mut visits: BTreeMap<String, u64> = BTreeMap::new();
    let mut edges: BTreeMap<(String, String, &'static str), u64> = BTreeMap::new();
    for ev in events {
        let to = ev.url.to_string();
        let from_page = ev
            .referer
            .as_ref()
            .map(ToString::to_string)
            .filter(|r| *r != to && visits.contains_key(r));
        let key = match from_page {
            Some(r) => (r, to.clone(), "followed"),
            None => ("ROOT".to_owned(), to.clone(), "jump"),
        };
        *edges.entry(key).or_default() += 1;
        *visits.entry(to).or_default() += 1;
    }
    GraphOracle { visits, edges }
}

pub fn map_counts(map: &SessionMap) -> GraphOracle {
    let url_of = |id| {
        if id == map.root {
            "ROOT".to_owned()
        } else {
            map.node(id).unwrap().url.to_string()
        }
    };
    GraphOracle {
        visits: map.nodes().iter().map(|n| (n.url.to_string(), n.visit_count)).collect(),
        edges: map
            .edges()
            .iter()
            .map(|e| ((url_of(e.from), url_of(e.to), e.kind.as_str()), e.traversal_count))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Geometry

/// Builds a map whose spanning tree has the given shape: `parents[i]` is the
/// parent of page `i + 1` and must be smaller than `i + 1` (0 is the root).
pub fn map_from_parents(parents: &[usize]) -> SessionMap {
    let mut m = SessionMap::new(uuid::Uuid::nil(), 0, None);
    let url = |i: usize| CanonicalUrl::parse(&format!("http://t.test/{i}")).unwrap();
    for (i, &p) in parents.iter().enumerate() {
        let node = i + 1;
        m.apply_event(&NavigationEvent {
            ts: node as Millis,
            url: url(node),
            referer: (p > 0).then(|| url(p)),
            title: Some(format!("n{node}")),
            opaque: false,
            txn_id: node as u64,
            since_last_ms: None,
        });
    }
    m
}

pub fn random_parents(rng: &mut StdRng, n: usize) -> Vec<usize> {
    // Mix of bushy and stringy trees.
    let locality = rng.random_range(1..=n.max(1));
    (1..=n)
        .map(|i| {
            let lo = i.saturating_sub(locality);
            rng.random_range(lo..i)
        })
        .collect()
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// True when the two segments cross at a point interior to both.
pub fn properly_cross(p: ((f64, f64), (f64, f64)), q: ((f64, f64), (f64, f64))) -> bool {
    const EPS: f64 = 1e-9;
    let d1 = orient(q.0, q.1, p.0);
    let d2 = orient(q.0, q.1, p.1);
    let d3 = orient(p.0, p.1, q.0);
    let d4 = orient(p.0, p.1, q.1);
    ((d1 > EPS && d2 < -EPS) || (d1 < -EPS && d2 > EPS)) && ((d3 > EPS && d4 < -EPS) || (d3 < -EPS && d4 > EPS))
}

/// Number of properly crossing tree-edge pairs, by checking every pair.
pub fn tree_edge_crossings(layout: &PositionedLayout) -> usize {
    let pos: HashMap<_, _> = layout.placements.iter().map(|p| (p.node_id, (p.x, p.y))).collect();
    let segs: Vec<_> = layout.tree_edges.iter().map(|e| (e.from, e.to, (pos[&e.from], pos[&e.to]))).collect();
    let mut crossings = 0;
    for i in 0..segs.len() {
        for j in i + 1..segs.len() {
            let (a, b, s) = segs[i];
            let (c, d, t) = segs[j];
            if a == c || a == d || b == c || b == d {
                continue;
            }
            if properly_cross(s, t) {
                crossings += 1;
            }
        }
    }
    crossings
}

/// Smallest horizontal gap between neighbouring boxes on any layer.
pub fn min_layer_gap(layout: &PositionedLayout) -> f64 {
    let mut layers: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for p in &layout.placements {
        layers.entry(p.depth).or_default().push(p.x);
    }
    let mut gap = f64::INFINITY;
    for xs in layers.values_mut() {
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            gap = gap.min(w[1] - w[0] - layout.node_width);
        }
    }
    gap
}

// ---------------------------------------------------------------------------
// Cache reference

/// Straightforward list-based model of the cache policy.
#[derive(Default)]
pub struct RefCache {
    pub residence: u64,
    pub idle: u64,
    pub capacity: u64,
    /// (key, size, stored_at, last_access)
    pub entries: Vec<(String, u64, u64, u64)>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum RefLookup {
    Hit,
    Absent,
    Residence,
    Idle,
}

impl RefCache {
    fn expired(&self, e: &(String, u64, u64, u64), now: u64) -> Option<RefLookup> {
        if now.saturating_sub(e.2) > self.residence {
            Some(RefLookup::Residence)
        } else if now.saturating_sub(e.3) > self.idle {
            Some(RefLookup::Idle)
        } else {
            None
        }
    }

    pub fn sweep(&mut self, now: u64) -> Vec<String> {
        let mut gone: Vec<String> = Vec::new();
        let mut kept = Vec::new();
        for e in std::mem::take(&mut self.entries) {
            if self.expired(&e, now).is_some() {
                gone.push(e.0.clone());
            } else {
                kept.push(e);
            }
        }
        self.entries = kept;
        gone.sort();
        gone
    }

    pub fn lookup(&mut self, key: &str, now: u64) -> RefLookup {
        let verdict = match self.entries.iter().find(|e| e.0 == key) {
            None => RefLookup::Absent,
            Some(e) => self.expired(e, now).unwrap_or(RefLookup::Hit),
        };
        self.sweep(now);
        if verdict == RefLookup::Hit {
            let e = self.entries.iter_mut().find(|e| e.0 == key).unwrap();
            e.3 = e.3.max(now);
        }
        verdict
    }

    pub fn insert(&mut self, key: &str, size: u64, now: u64) -> Vec<String> {
        let mut removed = self.sweep(now);
        if size > self.capacity {
            return removed;
        }
        self.entries.retain(|e| e.0 != key);
        self.entries.push((key.to_owned(), size, now, now));
        loop {
            let total: u64 = self.entries.iter().map(|e| e.1).sum();
            if total <= self.capacity {
                break;
            }
            let victim = self
                .entries
                .iter()
                .filter(|e| e.0 != key)
                .min_by(|a, b| (a.3, &a.0).cmp(&(b.3, &b.0)))
                .unwrap()
                .0
                .clone();
            self.entries.retain(|e| e.0 != victim);
            removed.push(victim);
        }
        removed
    }
}

// ---------------------------------------------------------------------------
// Reports reference

/// Dwell cap, (timestamp, host) per navigation, and the finalize time.
pub type SessionSpec = (Option<u64>, Vec<(Millis, String)>, Option<Millis>);

/// Per (date, host): visits and dwell in ms, computed by walking each
/// session's navigation list by index.
pub fn report_oracle(
    sessions: &[SessionSpec],
    offset_secs: i32,
) -> BTreeMap<(chrono::NaiveDate, String), (u64, u64)> {
    let mut out: BTreeMap<(chrono::NaiveDate, String), (u64, u64)> = BTreeMap::new();
    for (cap, navs, end) in sessions {
        for (i, (ts, host)) in navs.iter().enumerate() {
            let next = navs.get(i + 1).map(|n| n.0).or(*end);
            let dwell = next.map_or(0, |n| {
                let gap = (n - ts) as u64;
                cap.map_or(gap, |c| gap.min(c))
            });
            let local = chrono::DateTime::from_timestamp_millis(ts + offset_secs as i64 * 1000)
                .unwrap()
                .naive_utc()
                .date();
            let slot = out.entry((local, host.clone())).or_default();
            slot.0 += 1;
            slot.1 += dwell;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Hub driving

/// Feeds one HTML page load through the hub as the proxy would.
pub fn record_page(
    hub: &wayfinder::hub::SessionHub,
    url: &CanonicalUrl,
    referer: Option<&CanonicalUrl>,
    title: Option<&str>,
    now: Millis,
) -> Option<std::sync::Arc<wayfinder::graph::MapDelta>> {
    use wayfinder::proxy::{ForwardDecision, RequestSummary, ResponseMeta};
    let req = RequestSummary {
        started_at: now,
        method: "GET".into(),
        url: url.to_string(),
        referer: referer.map(ToString::to_string),
        accept: Some("text/html,application/xhtml+xml".into()),
    };
    let resp = ResponseMeta::Delivered {
        status: 200,
        content_type: Some("text/html; charset=utf-8".into()),
        body_bytes: 100,
        title: title.map(str::to_owned),
    };
    hub.record_at(&req, &ForwardDecision::ForwardToOrigin(url.clone()), &resp, now).1
}
