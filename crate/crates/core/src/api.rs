//! Control API: map snapshots, layouts, edits, session commands, reports and
//! the live update stream, plus the map UI's static files.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::rejection::QueryRejection;
use axum::extract::{ConnectInfo, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{FixedOffset, NaiveDate};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::cache::ProxyCache;
use crate::error::Error;
use crate::graph::EditCommand;
use crate::hub::{now_millis, SessionHub, Update};
use crate::layout::{render_view, DisplayMode, Level, LayoutOptions};
use crate::reports::{daily_report, local_date, session_summary};
use crate::store::{export_dot, export_svg};

pub const HEARTBEAT_INTERVAL: Duration = Duration::from_secs(15);

#[derive(Clone)]
pub struct ApiState {
    pub hub: Arc<SessionHub>,
    pub cache: Arc<Mutex<ProxyCache>>,
    pub utc_offset: FixedOffset,
    pub allow_remote: bool,
    /// Origin allowed by CORS: the UI served from this same listener.
    pub ui_origin: String,
    pub ui_dir: Option<PathBuf>,
    pub heartbeat: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiErrorCode {
    NotFound,
    Cycle,
    BadRequest,
    Version,
    Io,
}

impl ApiErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ApiErrorCode::NotFound => StatusCode::NOT_FOUND,
            ApiErrorCode::Cycle | ApiErrorCode::BadRequest => StatusCode::UNPROCESSABLE_ENTITY,
            ApiErrorCode::Version => StatusCode::CONFLICT,
            ApiErrorCode::Io => StatusCode::SERVICE_UNAVAILABLE,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ApiError {
    pub code: ApiErrorCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        Self { code: ApiErrorCode::BadRequest, message: message.into(), detail: None }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (code, detail) = match &e {
            Error::NodeNotFound(id) => (ApiErrorCode::NotFound, Some(json!({ "node": id }))),
            Error::EdgeNotFound(id) => (ApiErrorCode::NotFound, Some(json!({ "edge": id }))),
            Error::Cycle { node, parent } => (ApiErrorCode::Cycle, Some(json!({ "node": node, "parent": parent }))),
            Error::Version { found, supported } => {
                (ApiErrorCode::Version, Some(json!({ "found": found, "supported": supported })))
            }
            Error::Parse { offset, .. } => (ApiErrorCode::BadRequest, Some(json!({ "offset": offset }))),
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => (ApiErrorCode::NotFound, None),
            Error::Io(_) => (ApiErrorCode::Io, None),
            Error::InvalidEdit(_) | Error::InvalidUrl { .. } | Error::Config(_) | Error::Json(_) => {
                (ApiErrorCode::BadRequest, None)
            }
        };
        Self { code, message, detail }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: ApiState) -> Router {
    let api = Router::new()
        .route("/api/map", get(get_map))
        .route("/api/layout", get(get_layout))
        .route("/api/edit", post(post_edit))
        .route("/api/session/save", post(post_save))
        .route("/api/session/load", post(post_load))
        .route("/api/reports/daily", get(get_daily))
        .route("/api/reports/summary", get(get_summary))
        .route("/api/export.dot", get(get_dot))
        .route("/api/export.svg", get(get_svg))
        .route("/api/cache/stats", get(get_cache_stats))
        .route("/api/status", get(get_status))
        .route("/api/updates", get(get_updates));
    let app = match &state.ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.route("/", get(placeholder_ui)),
    };
    app.layer(middleware::from_fn_with_state(state.clone(), guard)).with_state(state)
}

/// Refuses non-loopback peers unless remote control is allowed, and adds
/// the CORS header for the UI origin.
async fn guard(State(state): State<ApiState>, req: Request, next: Next) -> Response {
    let peer = req.extensions().get::<ConnectInfo<SocketAddr>>().map(|c| c.0);
    if !state.allow_remote && peer.is_some_and(|p| !p.ip().is_loopback()) {
        return (StatusCode::FORBIDDEN, "control API is only available from this machine\n").into_response();
    }
    let mut resp = next.run(req).await;
    if let Ok(origin) = HeaderValue::from_str(&state.ui_origin) {
        resp.headers_mut().insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, origin);
    }
    resp
}

async fn placeholder_ui() -> Html<&'static str> {
    Html(concat!(
        "<!doctype html><html><head><meta charset=\"utf-8\"><title>wayfinder</title></head>",
        "<body><h1>wayfinder</h1><p>The map UI is not installed. Start with <code>--ui-dir</code> ",
        "pointing at a built UI, or use <a href=\"/api/export.svg\">the SVG export</a> and ",
        "<a href=\"/api/map\">the JSON map</a>.</p></body></html>"
    ))
}

async fn get_map(State(s): State<ApiState>) -> impl IntoResponse {
    Json(s.hub.snapshot())
}

#[derive(Debug, Default, Deserialize)]
struct LayoutQuery {
    level: Option<String>,
    depth: Option<usize>,
    mode: Option<String>,
}

fn layout_options(q: &LayoutQuery) -> ApiResult<LayoutOptions> {
    let mut opts = LayoutOptions::default();
    if let Some(level) = q.level.as_deref().filter(|s| !s.is_empty()) {
        opts.level = level.parse::<Level>().map_err(ApiError::from)?;
    }
    if let Some(mode) = q.mode.as_deref().filter(|s| !s.is_empty()) {
        opts.display_mode = mode.parse::<DisplayMode>().map_err(ApiError::from)?;
    }
    opts.max_depth = q.depth;
    opts.validate()?;
    Ok(opts)
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn get_layout(State(s): State<ApiState>, q: Result<Query<LayoutQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = query(q)?;
    let opts = layout_options(&q)?;
    Ok(Json(render_view(&s.hub.snapshot(), &opts)?).into_response())
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn post_edit(State(s): State<ApiState>, body: Bytes) -> ApiResult<Response> {
    let cmd: EditCommand = parse_json(&body)?;
    let delta = s.hub.edit(&cmd)?;
    Ok(Json(delta).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct PathBody {
    path: Option<PathBuf>,
}

async fn post_save(State(s): State<ApiState>, body: Bytes) -> ApiResult<Response> {
    let req: PathBody = if body.iter().all(u8::is_ascii_whitespace) { PathBody::default() } else { parse_json(&body)? };
    let path = s.hub.save(req.path.as_deref())?;
    Ok(Json(json!({ "status": "saved", "path": path, "revision": s.hub.revision() })).into_response())
}

async fn post_load(State(s): State<ApiState>, body: Bytes) -> ApiResult<Response> {
    let req: PathBody = parse_json(&body)?;
    let path = req.path.ok_or_else(|| ApiError::bad_request("missing \"path\""))?;
    let map = s.hub.load(&path)?;
    Ok(Json(json!({
        "status": "loaded",
        "path": path,
        "session_id": map.session_id,
        "revision": map.revision,
    }))
    .into_response())
}

#[derive(Debug, Default, Deserialize)]
struct DailyQuery {
    date: Option<String>,
}

async fn get_daily(State(s): State<ApiState>, q: Result<Query<DailyQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = query(q)?;
    let date = match q.date.as_deref() {
        None | Some("") | Some("today") => local_date(now_millis(), s.utc_offset),
        Some(d) => NaiveDate::parse_from_str(d, "%Y-%m-%d")
            .map_err(|_| ApiError::bad_request(format!("date must be YYYY-MM-DD, got {d:?}")))?,
    };
    let records = s.hub.all_records()?;
    Ok(Json(daily_report(&records, date, s.utc_offset)).into_response())
}

async fn get_summary(State(s): State<ApiState>) -> impl IntoResponse {
    Json(session_summary(&s.hub.snapshot()))
}

async fn get_dot(State(s): State<ApiState>) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/vnd.graphviz; charset=utf-8")], export_dot(&s.hub.snapshot()))
}

async fn get_svg(State(s): State<ApiState>, q: Result<Query<LayoutQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = query(q)?;
    let layout = render_view(&s.hub.snapshot(), &layout_options(&q)?)?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], export_svg(&layout)).into_response())
}

async fn get_cache_stats(State(s): State<ApiState>) -> impl IntoResponse {
    let stats = {
        let mut cache = s.cache.lock();
        cache.sweep((now_millis().max(0) / 1000) as u64);
        cache.stats()
    };
    Json(stats)
}

async fn get_status(State(s): State<ApiState>) -> impl IntoResponse {
    Json(s.hub.status())
}

#[derive(Debug, Default, Deserialize)]
struct UpdatesQuery {
    since: Option<u64>,
}

fn line(update: &Update) -> Bytes {
    let mut v = serde_json::to_vec(update).unwrap_or_else(|_| b"{\"type\":\"overflow\"}".to_vec());
    v.push(b'\n');
    Bytes::from(v)
}

/// Newline-delimited JSON: backlog first, then live deltas, with a
/// heartbeat when idle. A subscriber that falls behind the broadcast buffer
/// gets an overflow line and the stream ends.
async fn get_updates(State(s): State<ApiState>, q: Result<Query<UpdatesQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = query(q)?;
    let sub = s.hub.subscribe(q.since);
    let start_revision = s.hub.revision();
    struct Feed {
        backlog: std::collections::VecDeque<Update>,
        live: tokio::sync::broadcast::Receiver<Update>,
        heartbeat: tokio::time::Interval,
        revision: u64,
        done: bool,
    }
    let heartbeat = tokio::time::interval_at(tokio::time::Instant::now() + s.heartbeat, s.heartbeat);
    let feed = Feed {
        backlog: sub.backlog.into(),
        live: sub.live,
        heartbeat,
        revision: q.since.unwrap_or(start_revision),
        done: false,
    };
    let stream = futures::stream::unfold(feed, |mut f| async move {
        if f.done {
            return None;
        }
        let update = match f.backlog.pop_front() {
            Some(u) => u,
            None => tokio::select! {
                r = f.live.recv() => match r {
                    Ok(u) => u,
                    Err(RecvError::Lagged(_)) => {
                        f.done = true;
                        Update::Overflow
                    }
                    Err(RecvError::Closed) => return None,
                },
                _ = f.heartbeat.tick() => Update::Heartbeat { revision: f.revision },
            },
        };
        match &update {
            Update::Delta(d) => f.revision = d.revision,
            Update::Reset { revision, .. } => f.revision = *revision,
            _ => {}
        }
        Some((Ok::<_, Infallible>(line(&update)), f))
    });
    Ok(Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(stream))
        .expect("static headers are valid"))
}
