//! HTTP/1.1 forward proxy.
//!
//! The decision logic here is synchronous and clock-free so it can be driven
//! from tests; [`server`] wires it to sockets.

pub mod server;
mod wire;

use serde::{Deserialize, Serialize};

use crate::cache::{cache_key, CacheKey, Lookup, ProxyCache};
use crate::classify::{self, CanonicalUrl};
use crate::graph::{Millis, NavigationEvent};

pub use self::wire::{BodyFraming, Headers};

/// Value appended to `Via` on forwarded messages.
pub const VIA: &str = "1.1 wayfinder";

const HOP_BY_HOP: [&str; 9] = [
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "proxy-connection",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
];

const SUPPORTED_METHODS: [&str; 9] = [
    "GET", "HEAD", "POST", "PUT", "DELETE", "OPTIONS", "PATCH", "TRACE", "CONNECT",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransactionKind {
    Plain,
    Tunnel,
}

/// One proxied request, as written to the event log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpTransaction {
    pub id: u64,
    pub started_at: Millis,
    pub method: String,
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub referer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_type: Option<String>,
    pub body_bytes: u64,
    pub served_from_cache: bool,
    pub kind: TransactionKind,
    /// Time since the same address was last requested, when it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub since_last_ms: Option<u64>,
}

/// Request line and headers as received from the browser.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestHead {
    pub method: String,
    pub target: String,
    /// HTTP minor version (0 or 1).
    pub minor_version: u8,
    pub headers: Headers,
}

impl RequestHead {
    pub fn header(&self, name: &str) -> Option<&str> {
        wire::header(&self.headers, name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForwardDecision {
    ServeFromCache(CacheKey),
    ForwardToOrigin(CanonicalUrl),
    OpenTunnel(String, u16),
}

/// Why a request cannot be proxied; each maps to the status sent back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rejection {
    BadRequest(String),
    NotImplemented(String),
}

impl Rejection {
    pub fn status(&self) -> u16 {
        match self {
            Rejection::BadRequest(_) => 400,
            Rejection::NotImplemented(_) => 501,
        }
    }

    pub fn reason(&self) -> &str {
        match self {
            Rejection::BadRequest(r) | Rejection::NotImplemented(r) => r,
        }
    }
}

fn split_authority(authority: &str) -> Option<(String, u16)> {
    let authority = authority.trim();
    let (host, port) = if let Some(rest) = authority.strip_prefix('[') {
        let (host, tail) = rest.split_once(']')?;
        let port = match tail.strip_prefix(':') {
            Some(p) => p.parse().ok()?,
            None if tail.is_empty() => 443,
            None => return None,
        };
        (format!("[{host}]"), port)
    } else {
        match authority.rsplit_once(':') {
            Some((h, p)) => (h.to_owned(), p.parse().ok()?),
            None => (authority.to_owned(), 443),
        }
    };
    if host.is_empty() || port == 0 {
        return None;
    }
    Some((host.to_ascii_lowercase(), port))
}

fn forbids_cached_answer(head: &RequestHead) -> bool {
    let no_cache = |v: &str| {
        v.split(',')
            .map(|d| d.trim().to_ascii_lowercase())
            .any(|d| d == "no-cache" || d == "no-store" || d == "max-age=0")
    };
    head.header("cache-control").is_some_and(no_cache)
        || head.header("pragma").is_some_and(no_cache)
        || head.header("authorization").is_some()
}

/// Decides how a browser request is answered.
///
/// A reload (`Cache-Control: no-cache`) or an authenticated request skips
/// the cache lookup but its response may still be stored.
pub fn intercept(
    head: &RequestHead,
    cache: &mut ProxyCache,
    now_secs: u64,
) -> Result<ForwardDecision, Rejection> {
    if !SUPPORTED_METHODS.contains(&head.method.as_str()) {
        return Err(Rejection::NotImplemented(format!("method {} not supported", head.method)));
    }
    if head.method == "CONNECT" {
        let (host, port) = split_authority(&head.target)
            .ok_or_else(|| Rejection::BadRequest(format!("bad CONNECT target {:?}", head.target)))?;
        return Ok(ForwardDecision::OpenTunnel(host, port));
    }
    let url = CanonicalUrl::parse(&head.target).map_err(|_| {
        Rejection::BadRequest(format!("expected an absolute http URL, got {:?}", head.target))
    })?;
    if url.scheme() != "http" {
        return Err(Rejection::NotImplemented(format!(
            "{} is only reachable through CONNECT",
            url.scheme()
        )));
    }
    if let Some(key) = cache_key(&head.method, &url) {
        if !forbids_cached_answer(head) {
            if let Lookup::Hit(_) = cache.lookup(&key, now_secs) {
                return Ok(ForwardDecision::ServeFromCache(key));
            }
        }
    }
    Ok(ForwardDecision::ForwardToOrigin(url))
}

/// Request fields retained for the transaction record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestSummary {
    pub started_at: Millis,
    pub method: String,
    pub url: String,
    pub referer: Option<String>,
    pub accept: Option<String>,
}

impl RequestSummary {
    pub fn from_head(head: &RequestHead, started_at: Millis) -> Self {
        Self {
            started_at,
            method: head.method.clone(),
            url: head.target.clone(),
            referer: head.header("referer").map(str::to_owned),
            accept: head.header("accept").map(str::to_owned),
        }
    }
}

/// How a request ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResponseMeta {
    Delivered {
        status: u16,
        content_type: Option<String>,
        body_bytes: u64,
        title: Option<String>,
    },
    /// The origin could not be reached; the browser got a 502.
    OriginUnreachable,
    /// A CONNECT tunnel was established. The record is written when the
    /// tunnel opens, so relayed bytes are not counted.
    Tunneled,
}

/// Builds the log record for a finished request and, when it was a page
/// navigation, the event that feeds the map.
pub fn complete_transaction(
    id: u64,
    request: &RequestSummary,
    decision: &ForwardDecision,
    response: &ResponseMeta,
    now: Millis,
) -> (HttpTransaction, Option<NavigationEvent>) {
    let mut txn = HttpTransaction {
        id,
        started_at: request.started_at,
        method: request.method.clone(),
        url: request.url.clone(),
        referer: request.referer.clone(),
        accept: request.accept.clone(),
        status: None,
        content_type: None,
        body_bytes: 0,
        served_from_cache: matches!(decision, ForwardDecision::ServeFromCache(_)),
        kind: TransactionKind::Plain,
        since_last_ms: None,
    };
    let event = match (decision, response) {
        (ForwardDecision::OpenTunnel(host, port), ResponseMeta::Tunneled) => {
            txn.kind = TransactionKind::Tunnel;
            CanonicalUrl::tunnel(host, *port).ok().map(|url| NavigationEvent {
                ts: now,
                url,
                referer: None,
                title: None,
                opaque: true,
                txn_id: id,
                since_last_ms: None,
            })
        }
        (_, ResponseMeta::OriginUnreachable) | (_, ResponseMeta::Tunneled) => {
            txn.status = Some(502);
            None
        }
        (_, ResponseMeta::Delivered { status, content_type, body_bytes, title }) => {
            txn.status = Some(*status);
            txn.content_type = content_type.clone();
            txn.body_bytes = *body_bytes;
            if classify::is_page_navigation(&txn) {
                CanonicalUrl::parse(&txn.url).ok().map(|url| NavigationEvent {
                    ts: now,
                    url,
                    referer: txn.referer.as_deref().and_then(|r| CanonicalUrl::parse(r).ok()),
                    title: title.clone(),
                    opaque: false,
                    txn_id: id,
                    since_last_ms: None,
                })
            } else {
                None
            }
        }
    };
    (txn, event)
}

/// Drops hop-by-hop headers (including any named by `Connection`) and
/// appends this proxy to `Via`.
pub fn strip_hop_headers(headers: &Headers) -> Headers {
    let named: Vec<String> = headers
        .iter()
        .filter(|(k, _)| k.eq_ignore_ascii_case("connection"))
        .flat_map(|(_, v)| v.split(','))
        .map(|t| t.trim().to_ascii_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    let mut out: Headers = headers
        .iter()
        .filter(|(k, _)| {
            let k = k.to_ascii_lowercase();
            !HOP_BY_HOP.contains(&k.as_str()) && !named.contains(&k)
        })
        .cloned()
        .collect();
    out.push(("Via".to_owned(), VIA.to_owned()));
    out
}
