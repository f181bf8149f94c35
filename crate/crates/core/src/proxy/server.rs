//! Socket side of the proxy: accepts browser connections, forwards to
//! origins, relays tunnels and reports each finished request to the hub.

use std::io::{self, Read};
use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use parking_lot::Mutex;
use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream};
use tokio::time::timeout;
use tracing::{debug, warn};

use super::wire::{
    encode_head, finish_body, has_token, header, reason_phrase, request_framing, response_framing,
    write_body_chunk, BodyFraming, BodyReader, HeadError, HttpConn, OutFraming,
};
use super::{intercept, strip_hop_headers, ForwardDecision, Headers, RequestHead, RequestSummary, ResponseMeta, VIA};
use crate::cache::{cache_key, CacheEntry, ProxyCache};
use crate::classify::{self, extract_title, CanonicalUrl, TitleWindow, TITLE_WINDOW};
use crate::hub::{now_millis, SessionHub};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);
const CLIENT_IDLE_TIMEOUT: Duration = Duration::from_secs(120);
const ORIGIN_HEAD_TIMEOUT: Duration = Duration::from_secs(60);
/// Largest body buffered for the cache regardless of cache capacity.
const MAX_CACHED_BODY: u64 = 32 * 1024 * 1024;

/// Everything a connection handler needs.
pub struct ProxyContext {
    pub hub: Arc<SessionHub>,
    pub cache: Arc<Mutex<ProxyCache>>,
}

/// Accepts connections until the listener fails.
pub async fn run(listener: TcpListener, ctx: Arc<ProxyContext>) -> io::Result<()> {
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(conn) => conn,
            Err(e) => {
                warn!("accept failed: {e}");
                tokio::time::sleep(Duration::from_millis(50)).await;
                continue;
            }
        };
        let ctx = ctx.clone();
        tokio::spawn(async move {
            if let Err(e) = handle_client(stream, ctx).await {
                debug!(%peer, "connection ended: {e}");
            }
        });
    }
}

fn secs(ms: i64) -> u64 {
    (ms.max(0) / 1000) as u64
}

fn client_keep_alive(head: &RequestHead) -> bool {
    let close = has_token(&head.headers, "connection", "close") || has_token(&head.headers, "proxy-connection", "close");
    head.minor_version >= 1 && !close
}

fn connect_host(host: &str) -> &str {
    host.trim_start_matches('[').trim_end_matches(']')
}

fn authority(url: &CanonicalUrl) -> String {
    match url.port() {
        Some(p) => format!("{}:{p}", url.host()),
        None => url.host().to_owned(),
    }
}

/// Path and query exactly as the browser wrote them, without the fragment.
fn raw_origin_form(target: &str) -> String {
    let after_scheme = target.split_once("://").map_or(target, |(_, rest)| rest);
    let rest = after_scheme.find(['/', '?', '#']).map_or("", |i| &after_scheme[i..]);
    let rest = rest.split('#').next().unwrap_or("");
    if rest.is_empty() {
        "/".to_owned()
    } else if rest.starts_with('?') {
        format!("/{rest}")
    } else {
        rest.to_owned()
    }
}

async fn send_error<W: AsyncWriteExt + Unpin>(w: &mut W, status: u16, message: &str) -> io::Result<()> {
    let body = format!("{message}\n");
    let headers: Headers = vec![
        ("Content-Type".into(), "text/plain; charset=utf-8".into()),
        ("Content-Length".into(), body.len().to_string()),
        ("Connection".into(), "close".into()),
        ("Via".into(), VIA.into()),
    ];
    let mut out = encode_head(&format!("HTTP/1.1 {status} {}", reason_phrase(status)), &headers);
    out.extend_from_slice(body.as_bytes());
    w.write_all(&out).await?;
    w.flush().await
}

async fn handle_client(stream: TcpStream, ctx: Arc<ProxyContext>) -> io::Result<()> {
    stream.set_nodelay(true).ok();
    let mut client = HttpConn::new(stream);
    loop {
        let head = match timeout(CLIENT_IDLE_TIMEOUT, client.read_request_head()).await {
            Err(_) | Ok(Ok(None)) => return Ok(()),
            Ok(Ok(Some(head))) => head,
            Ok(Err(HeadError::Io(e))) => return Err(e),
            Ok(Err(HeadError::Truncated)) => return Ok(()),
            Ok(Err(HeadError::Malformed(why))) => {
                return send_error(client.get_mut(), 400, &format!("malformed request: {why}")).await;
            }
        };
        let started = now_millis();
        let summary = RequestSummary::from_head(&head, started);
        let decision = intercept(&head, &mut ctx.cache.lock(), secs(started));
        let reusable = match decision {
            Err(rejection) => {
                send_error(client.get_mut(), rejection.status(), rejection.reason()).await?;
                false
            }
            Ok(ForwardDecision::OpenTunnel(host, port)) => {
                tunnel(client, &summary, host, port, &ctx).await;
                return Ok(());
            }
            Ok(ForwardDecision::ServeFromCache(key)) => {
                let url = CanonicalUrl::parse(&head.target).map_err(io::Error::other)?;
                let entry = ctx.cache.lock().get(&key).cloned();
                match entry {
                    Some(entry) if !ctx.cache.lock().needs_revalidation(&entry, secs(started)) => {
                        serve_cached(&mut client, &head, &summary, entry, &ctx).await?
                    }
                    entry => forward(&mut client, &head, &summary, url, entry, &ctx).await?,
                }
            }
            Ok(ForwardDecision::ForwardToOrigin(url)) => {
                forward(&mut client, &head, &summary, url, None, &ctx).await?
            }
        };
        if !(reusable && client_keep_alive(&head)) {
            return Ok(());
        }
    }
}

async fn tunnel(client: HttpConn<TcpStream>, summary: &RequestSummary, host: String, port: u16, ctx: &ProxyContext) {
    let connected = timeout(CONNECT_TIMEOUT, TcpStream::connect((connect_host(&host), port))).await;
    let decision = ForwardDecision::OpenTunnel(host, port);
    let (mut down, leftover) = client.into_parts();
    match connected {
        Ok(Ok(mut up)) => {
            if down.write_all(b"HTTP/1.1 200 Connection Established\r\n\r\n").await.is_err() {
                return;
            }
            ctx.hub.record(summary, &decision, &ResponseMeta::Tunneled);
            if !leftover.is_empty() && up.write_all(&leftover).await.is_err() {
                return;
            }
            let _ = tokio::io::copy_bidirectional(&mut down, &mut up).await;
        }
        _ => {
            let _ = send_error(&mut down, 502, "could not reach tunnel target").await;
            ctx.hub.record(summary, &decision, &ResponseMeta::OriginUnreachable);
        }
    }
}

fn content_type(headers: &Headers) -> Option<String> {
    header(headers, "content-type").map(str::to_owned)
}

/// Decodes the leading bytes of a body that may carry a content coding.
/// A truncated compressed stream yields whatever decoded before the cut.
fn decode_prefix(encoding: Option<&str>, raw: &[u8]) -> Vec<u8> {
    fn read_some(mut r: impl Read) -> Vec<u8> {
        let mut out = Vec::new();
        let mut buf = [0u8; 8192];
        while out.len() < TITLE_WINDOW {
            match r.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => out.extend_from_slice(&buf[..n]),
            }
        }
        out.truncate(TITLE_WINDOW);
        out
    }
    let coding = encoding.map(|e| e.trim().to_ascii_lowercase());
    match coding.as_deref() {
        Some("gzip") | Some("x-gzip") => read_some(flate2::read::MultiGzDecoder::new(raw)),
        Some("deflate") => {
            let zlib = read_some(flate2::read::ZlibDecoder::new(raw));
            if zlib.is_empty() {
                read_some(flate2::read::DeflateDecoder::new(raw))
            } else {
                zlib
            }
        }
        Some("br") => read_some(brotli_decompressor::Decompressor::new(raw, 4096)),
        _ => raw.to_vec(),
    }
}

fn title_of(headers: &Headers, prefix: &[u8]) -> Option<String> {
    let ct = header(headers, "content-type");
    if !classify::is_html(ct) {
        return None;
    }
    extract_title(&decode_prefix(header(headers, "content-encoding"), prefix), ct)
}

fn storable(request: &RequestHead, response: &Headers) -> bool {
    let directive = |headers: &Headers, name: &str, tokens: &[&str]| {
        headers
            .iter()
            .filter(|(k, _)| k.eq_ignore_ascii_case(name))
            .flat_map(|(_, v)| v.split(','))
            .any(|d| tokens.contains(&d.trim().to_ascii_lowercase().as_str()))
    };
    request.header("authorization").is_none()
        && !directive(&request.headers, "cache-control", &["no-store"])
        && !directive(response, "cache-control", &["no-store", "private"])
        && header(response, "vary").is_none()
        && header(response, "set-cookie").is_none()
}

async fn serve_cached(
    client: &mut HttpConn<TcpStream>,
    head: &RequestHead,
    summary: &RequestSummary,
    entry: CacheEntry,
    ctx: &ProxyContext,
) -> io::Result<bool> {
    let framing = match request_framing(&head.headers) {
        Ok(f) => f,
        Err(why) => {
            send_error(client.get_mut(), 400, &why).await?;
            return Ok(false);
        }
    };
    client.drain_body(&mut BodyReader::new(framing)).await?;
    write_cached(client, &entry, client_keep_alive(head)).await?;
    let decision = ForwardDecision::ServeFromCache(entry.key.clone());
    let prefix = &entry.body[..entry.body.len().min(TITLE_WINDOW)];
    ctx.hub.record(
        summary,
        &decision,
        &ResponseMeta::Delivered {
            status: entry.status,
            content_type: content_type(&entry.headers),
            body_bytes: entry.size(),
            title: title_of(&entry.headers, prefix),
        },
    );
    Ok(true)
}

async fn write_cached(client: &mut HttpConn<TcpStream>, entry: &CacheEntry, keep_alive: bool) -> io::Result<()> {
    let mut headers = entry.headers.clone();
    headers.push(("Content-Length".into(), entry.body.len().to_string()));
    if !keep_alive {
        headers.push(("Connection".into(), "close".into()));
    }
    let mut out = encode_head(&format!("HTTP/1.1 {} {}", entry.status, reason_phrase(entry.status)), &headers);
    out.extend_from_slice(&entry.body);
    let w = client.get_mut();
    w.write_all(&out).await?;
    w.flush().await
}

/// Forwards one request to its origin and streams the answer back.
/// With `stale` set this is a conditional refresh of that stored copy.
/// Returns whether the browser connection can carry another request.
async fn forward(
    client: &mut HttpConn<TcpStream>,
    head: &RequestHead,
    summary: &RequestSummary,
    url: CanonicalUrl,
    stale: Option<CacheEntry>,
    ctx: &ProxyContext,
) -> io::Result<bool> {
    let req_framing = match request_framing(&head.headers) {
        Ok(f) => f,
        Err(why) => {
            send_error(client.get_mut(), 400, &why).await?;
            return Ok(false);
        }
    };
    let decision = ForwardDecision::ForwardToOrigin(url.clone());
    let mut req_body = BodyReader::new(req_framing);

    let connected = timeout(CONNECT_TIMEOUT, TcpStream::connect((connect_host(url.host()), url.effective_port()))).await;
    let origin = match connected {
        Ok(Ok(s)) => s,
        _ => {
            client.drain_body(&mut req_body).await?;
            return unreachable(client, head, summary, stale, ctx, &decision).await;
        }
    };
    origin.set_nodelay(true).ok();
    let mut origin = HttpConn::new(origin);

    if has_token(&head.headers, "expect", "100-continue") && req_framing != BodyFraming::Empty {
        client.get_mut().write_all(b"HTTP/1.1 100 Continue\r\n\r\n").await?;
    }
    let conditional = stale.as_ref().and_then(|e| e.origin_last_modified.clone());
    let mut headers: Headers = strip_hop_headers(&head.headers)
        .into_iter()
        .filter(|(k, _)| {
            !k.eq_ignore_ascii_case("host")
                && !k.eq_ignore_ascii_case("expect")
                && !(conditional.is_some() && k.eq_ignore_ascii_case("if-modified-since"))
        })
        .collect();
    headers.insert(0, ("Host".into(), authority(&url)));
    if let Some(lm) = conditional {
        headers.push(("If-Modified-Since".into(), lm));
    }
    let body_out = if req_framing == BodyFraming::Chunked {
        headers.push(("Transfer-Encoding".into(), "chunked".into()));
        OutFraming::Chunked
    } else {
        OutFraming::Raw
    };
    headers.push(("Connection".into(), "close".into()));
    let request_line = format!("{} {} HTTP/1.1", head.method, raw_origin_form(&head.target));

    let mut sent = origin.get_mut().write_all(&encode_head(&request_line, &headers)).await.is_ok();
    while let Some(chunk) = client.read_body_chunk(&mut req_body).await? {
        if sent && write_body_chunk(origin.get_mut(), body_out, &chunk).await.is_err() {
            sent = false;
        }
    }
    if sent {
        let _ = finish_body(origin.get_mut(), body_out).await;
    }

    let resp = match timeout(ORIGIN_HEAD_TIMEOUT, origin.read_response_head()).await {
        Ok(Ok(resp)) => resp,
        _ => return unreachable(client, head, summary, stale, ctx, &decision).await,
    };
    let now = now_millis();
    if let (Some(entry), 304) = (&stale, resp.status) {
        ctx.cache.lock().mark_revalidated(&entry.key, secs(now));
        return serve_cached(client, head, summary, entry.clone(), ctx).await;
    }
    let framing = match response_framing(&head.method, resp.status, &resp.headers) {
        Ok(f) => f,
        Err(_) => return unreachable(client, head, summary, stale, ctx, &decision).await,
    };

    let keep_alive = client_keep_alive(head);
    let mut out_headers = strip_hop_headers(&resp.headers);
    let (out, close_after) = match framing {
        BodyFraming::Empty | BodyFraming::Fixed(_) => (OutFraming::Raw, false),
        BodyFraming::Chunked | BodyFraming::UntilClose if head.minor_version >= 1 => {
            out_headers.retain(|(k, _)| !k.eq_ignore_ascii_case("content-length"));
            out_headers.push(("Transfer-Encoding".into(), "chunked".into()));
            (OutFraming::Chunked, false)
        }
        _ => {
            out_headers.retain(|(k, _)| !k.eq_ignore_ascii_case("content-length"));
            (OutFraming::Raw, true)
        }
    };
    if close_after || !keep_alive {
        out_headers.push(("Connection".into(), "close".into()));
    }
    let status_line = format!("HTTP/1.1 {} {}", resp.status, resp.reason);
    let mut client_ok = client.get_mut().write_all(&encode_head(&status_line, &out_headers)).await.is_ok();

    let is_html = classify::is_html(header(&resp.headers, "content-type"));
    let key = cache_key(&head.method, &url);
    let cache_limit = ctx.cache.lock().policy().capacity_bytes.min(MAX_CACHED_BODY);
    let mut cache_buf = (key.is_some() && resp.status == 200 && storable(head, &resp.headers)).then(Vec::new);
    let mut window = TitleWindow::default();
    let mut reader = BodyReader::new(framing);
    let mut total: u64 = 0;
    let mut complete = true;
    loop {
        match origin.read_body_chunk(&mut reader).await {
            Ok(Some(chunk)) => {
                total += chunk.len() as u64;
                if is_html && !window.is_full() {
                    window.push(&chunk);
                }
                if let Some(buf) = cache_buf.as_mut() {
                    if (buf.len() + chunk.len()) as u64 > cache_limit {
                        cache_buf = None;
                    } else {
                        buf.extend_from_slice(&chunk);
                    }
                }
                if client_ok && write_body_chunk(client.get_mut(), out, &chunk).await.is_err() {
                    client_ok = false;
                }
                if !client_ok && cache_buf.is_none() {
                    complete = false;
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => {
                debug!("origin body for {url} cut short: {e}");
                complete = false;
                break;
            }
        }
    }
    if client_ok && complete {
        client_ok = finish_body(client.get_mut(), out).await.is_ok();
    }

    if let (true, Some(body), Some(key)) = (complete, cache_buf, key) {
        let stored: Headers = out_headers
            .iter()
            .filter(|(k, _)| {
                !k.eq_ignore_ascii_case("connection")
                    && !k.eq_ignore_ascii_case("transfer-encoding")
                    && !k.eq_ignore_ascii_case("content-length")
            })
            .cloned()
            .collect();
        let entry = CacheEntry::new(key, resp.status, stored, Bytes::from(body));
        let mut cache = ctx.cache.lock();
        if stale.is_some() {
            cache.replace_stale(entry, secs(now));
        } else {
            cache.insert(entry, secs(now));
        }
    }

    let title = if is_html { title_of(&resp.headers, window.bytes()) } else { None };
    ctx.hub.record(
        summary,
        &decision,
        &ResponseMeta::Delivered {
            status: resp.status,
            content_type: content_type(&resp.headers),
            body_bytes: total,
            title,
        },
    );
    Ok(client_ok && complete && !close_after && req_body.is_done())
}

/// The origin could not be used: serve the stored copy if there is one,
/// otherwise answer 502.
async fn unreachable(
    client: &mut HttpConn<TcpStream>,
    head: &RequestHead,
    summary: &RequestSummary,
    stale: Option<CacheEntry>,
    ctx: &ProxyContext,
    decision: &ForwardDecision,
) -> io::Result<bool> {
    if let Some(entry) = stale {
        write_cached(client, &entry, client_keep_alive(head)).await?;
        let prefix = &entry.body[..entry.body.len().min(TITLE_WINDOW)];
        ctx.hub.record(
            summary,
            &ForwardDecision::ServeFromCache(entry.key.clone()),
            &ResponseMeta::Delivered {
                status: entry.status,
                content_type: content_type(&entry.headers),
                body_bytes: entry.size(),
                title: title_of(&entry.headers, prefix),
            },
        );
        return Ok(true);
    }
    send_error(client.get_mut(), 502, "origin unreachable").await?;
    ctx.hub.record(summary, decision, &ResponseMeta::OriginUnreachable);
    Ok(false)
}
