//! Local navigation-mapping proxy.
//!
//! Browser traffic goes through an HTTP/1.1 forward proxy ([`proxy`]); page
//! navigations are folded into a per-session directed graph ([`graph`]) by a
//! single writer ([`hub`]), persisted as an append-only log ([`store`]), laid
//! out as a tidy tree ([`layout`]) and served to a map UI over a local HTTP
//! API ([`api`]).

pub mod api;
pub mod cache;
pub mod classify;
pub mod config;
pub mod error;
pub mod graph;
pub mod hub;
pub mod layout;
pub mod proxy;
pub mod reports;
pub mod store;

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::FixedOffset;
use parking_lot::Mutex;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use uuid::Uuid;

pub use crate::config::ProxyConfig;
pub use crate::error::{Error, Result};

use crate::cache::ProxyCache;
use crate::classify::CanonicalUrl;
use crate::graph::SessionMap;
use crate::hub::{now_millis, SessionHub};
use crate::proxy::server::ProxyContext;
use crate::store::{load_map, JournalAction};

const MAINTENANCE_INTERVAL: Duration = Duration::from_secs(1);

pub fn utc_offset(config: &ProxyConfig) -> Result<FixedOffset> {
    FixedOffset::east_opt(config.utc_offset_minutes * 60)
        .ok_or_else(|| Error::Config(format!("utc offset {} minutes out of range", config.utc_offset_minutes)))
}

/// Reads a seed list: one URL per line, blank lines and `#` comments skipped.
pub fn read_seed_list(path: &Path) -> Result<Vec<CanonicalUrl>> {
    fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(CanonicalUrl::parse)
        .collect()
}

/// Where the live session comes from at startup.
#[derive(Clone, Debug, Default)]
pub enum SessionSource {
    #[default]
    Fresh,
    /// Reopen a saved map and keep recording into it.
    Reopen(PathBuf),
    /// Start from a list of pre-selected pages.
    Seed(PathBuf),
}

pub fn open_hub(config: &ProxyConfig, source: &SessionSource) -> Result<Arc<SessionHub>> {
    let now = now_millis();
    let idle = Some(config.idle_threshold * 1000);
    let dir = config.sessions_dir();
    Ok(match source {
        SessionSource::Fresh => SessionHub::start(dir, idle, now),
        SessionSource::Reopen(path) => {
            let map = load_map(path)?;
            SessionHub::resume(dir, map, JournalAction::Load { path: path.clone() }, now)
        }
        SessionSource::Seed(path) => {
            let urls = read_seed_list(path)?;
            let map = SessionMap::seed_from_list(&urls, Uuid::new_v4(), now, idle)?;
            SessionHub::resume(dir, map, JournalAction::Seed, now)
        }
    })
}

/// The running proxy, control API and maintenance tasks.
pub struct Services {
    pub hub: Arc<SessionHub>,
    pub cache: Arc<Mutex<ProxyCache>>,
    pub proxy_addr: SocketAddr,
    pub control_addr: SocketAddr,
    tasks: Vec<JoinHandle<()>>,
}

impl Services {
    /// Stops accepting connections, then finalizes and saves the session.
    pub fn shutdown(self) -> Result<PathBuf> {
        for t in &self.tasks {
            t.abort();
        }
        self.hub.close()
    }
}

pub async fn start(config: &ProxyConfig, hub: Arc<SessionHub>) -> Result<Services> {
    config.validate()?;
    let offset = utc_offset(config)?;
    let proxy_listener = TcpListener::bind(config.listen_address).await?;
    let control_listener = TcpListener::bind(config.control_address).await?;
    let proxy_addr = proxy_listener.local_addr()?;
    let control_addr = control_listener.local_addr()?;
    let cache = Arc::new(Mutex::new(ProxyCache::new(config.cache)));

    let ctx = Arc::new(ProxyContext { hub: hub.clone(), cache: cache.clone() });
    let proxy_task = tokio::spawn(async move {
        if let Err(e) = proxy::server::run(proxy_listener, ctx).await {
            tracing::error!("proxy stopped: {e}");
        }
    });

    let state = api::ApiState {
        hub: hub.clone(),
        cache: cache.clone(),
        utc_offset: offset,
        allow_remote: config.allow_remote_control,
        ui_origin: format!("http://{control_addr}"),
        ui_dir: config.ui_dir.clone(),
        heartbeat: api::HEARTBEAT_INTERVAL,
    };
    let app = api::router(state).into_make_service_with_connect_info::<SocketAddr>();
    let control_task = tokio::spawn(async move {
        if let Err(e) = axum::serve(control_listener, app).await {
            tracing::error!("control API stopped: {e}");
        }
    });

    let (mhub, mcache) = (hub.clone(), cache.clone());
    let maintenance = tokio::spawn(async move {
        let mut every = tokio::time::interval(MAINTENANCE_INTERVAL);
        loop {
            every.tick().await;
            mhub.tick_flush();
            mcache.lock().sweep((now_millis().max(0) / 1000) as u64);
        }
    });

    tracing::info!(%proxy_addr, %control_addr, session = %hub.session_id(), "wayfinder running");
    Ok(Services { hub, cache, proxy_addr, control_addr, tasks: vec![proxy_task, control_task, maintenance] })
}
