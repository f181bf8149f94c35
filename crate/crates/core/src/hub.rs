//! The single writer of the live session.
//!
//! Proxy handlers, edits and session commands all pass through one lock, in
//! which transaction ids are assigned, records are appended to the event log,
//! the map is updated and the resulting delta is broadcast. Subscribers
//! therefore see deltas in revision order with no gaps.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::Serialize;
use tokio::sync::broadcast;
use uuid::Uuid;

use crate::classify::CanonicalUrl;
use crate::error::Result;
use crate::graph::{EditCommand, MapDelta, Millis, SessionMap};
use crate::proxy::{complete_transaction, ForwardDecision, HttpTransaction, RequestSummary, ResponseMeta};
use crate::store::{
    load_map, read_sessions, save_map, EventLogRecord, JournalAction, JournalEntry, JsonlWriter, RecordBody,
    SessionPaths,
};

/// Deltas kept for subscribers that resume from an older revision.
pub const HISTORY_LIMIT: usize = 4096;
const CHANNEL_CAPACITY: usize = 1024;

pub fn now_millis() -> Millis {
    chrono::Utc::now().timestamp_millis()
}

/// One line of the live update stream.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Update {
    Delta(Arc<MapDelta>),
    /// The session was replaced or history is unavailable: refetch the map.
    Reset { session_id: Uuid, revision: u64 },
    Heartbeat { revision: u64 },
    /// The subscriber fell too far behind and is being disconnected.
    Overflow,
}

pub struct Subscription {
    /// Updates owed before the live feed, already in order.
    pub backlog: Vec<Update>,
    pub live: broadcast::Receiver<Update>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HubStatus {
    pub session_id: Uuid,
    pub started_at: Millis,
    pub revision: u64,
    pub pages: usize,
    pub transactions: u64,
    pub session_dir: PathBuf,
    /// Last failure to write session data; the proxy keeps serving regardless.
    pub store_error: Option<String>,
}

struct HubState {
    map: SessionMap,
    history: VecDeque<Arc<MapDelta>>,
    paths: SessionPaths,
    log: Option<JsonlWriter>,
    journal: Option<JsonlWriter>,
    next_txn_id: u64,
    transactions: u64,
    last_ts: Millis,
    last_request: HashMap<String, Millis>,
    store_error: Option<String>,
}

impl HubState {
    fn open(sessions_dir: &Path, map: SessionMap, now: Millis) -> Self {
        let paths = SessionPaths::new(sessions_dir, map.session_id);
        let mut store_error = None;
        let mut open = |path: &Path| match JsonlWriter::open(path) {
            Ok(w) => Some(w),
            Err(e) => {
                store_error = Some(format!("cannot open {}: {e}", path.display()));
                None
            }
        };
        let log = open(&paths.events);
        let journal = open(&paths.journal);
        Self {
            last_ts: now.max(map.clock()),
            map,
            history: VecDeque::new(),
            paths,
            log,
            journal,
            next_txn_id: 1,
            transactions: 0,
            last_request: HashMap::new(),
            store_error,
        }
    }

    /// Clock reading that never goes backwards within the session.
    fn tick(&mut self, now: Millis) -> Millis {
        self.last_ts = self.last_ts.max(now);
        self.last_ts
    }

    fn fail(&mut self, what: &str, e: impl std::fmt::Display) {
        let msg = format!("{what} {}: {e}", self.paths.dir.display());
        tracing::error!("{msg}");
        self.store_error = Some(msg);
    }

    fn append(&mut self, logged_at: Millis, body: RecordBody) {
        let record = EventLogRecord { session_id: self.map.session_id, logged_at, body };
        if let Some(log) = self.log.as_mut() {
            if let Err(e) = log.append(&record) {
                self.fail("event log write failed in", e);
            }
        }
    }

    fn journal(&mut self, revision: u64, ts: Millis, action: JournalAction) {
        if let Some(j) = self.journal.as_mut() {
            if let Err(e) = j.append(&JournalEntry { revision, ts, action }) {
                self.fail("journal write failed in", e);
            }
        }
    }

    fn sync(&mut self) {
        for w in [self.log.as_mut(), self.journal.as_mut()].into_iter().flatten() {
            if let Err(e) = w.sync() {
                let msg = format!("sync of {} failed: {e}", w.path().display());
                tracing::error!("{msg}");
                self.store_error = Some(msg);
            }
        }
    }
}

pub struct SessionHub {
    sessions_dir: PathBuf,
    state: Mutex<HubState>,
    tx: broadcast::Sender<Update>,
}

impl SessionHub {
    /// Starts a fresh session.
    pub fn start(sessions_dir: impl Into<PathBuf>, idle_threshold_ms: Option<u64>, now: Millis) -> Arc<Self> {
        let sessions_dir = sessions_dir.into();
        let map = SessionMap::new(Uuid::new_v4(), now, idle_threshold_ms);
        let mut state = HubState::open(&sessions_dir, map, now);
        state.append(now, RecordBody::SessionStart { started_at: now, idle_threshold_ms });
        Self::from_state(sessions_dir, state)
    }

    /// Continues with an existing map, e.g. one reopened from a file or seeded.
    pub fn resume(sessions_dir: impl Into<PathBuf>, map: SessionMap, origin: JournalAction, now: Millis) -> Arc<Self> {
        let sessions_dir = sessions_dir.into();
        let mut state = HubState::open(&sessions_dir, map, now);
        let ts = state.tick(now);
        state.append(ts, RecordBody::Snapshot { map: Box::new(state.map.clone()) });
        let revision = state.map.revision;
        state.journal(revision, ts, origin);
        Self::from_state(sessions_dir, state)
    }

    fn from_state(sessions_dir: PathBuf, mut state: HubState) -> Arc<Self> {
        state.sync();
        let (tx, _) = broadcast::channel(CHANNEL_CAPACITY);
        Arc::new(Self { sessions_dir, state: Mutex::new(state), tx })
    }

    fn publish(&self, st: &mut HubState, delta: MapDelta) -> Arc<MapDelta> {
        let delta = Arc::new(delta);
        st.history.push_back(delta.clone());
        if st.history.len() > HISTORY_LIMIT {
            st.history.pop_front();
        }
        // No receivers is fine.
        let _ = self.tx.send(Update::Delta(delta.clone()));
        delta
    }

    /// Logs a finished proxy request and folds any page navigation into the map.
    pub fn record(
        &self,
        request: &RequestSummary,
        decision: &ForwardDecision,
        response: &ResponseMeta,
    ) -> (HttpTransaction, Option<Arc<MapDelta>>) {
        self.record_at(request, decision, response, now_millis())
    }

    pub fn record_at(
        &self,
        request: &RequestSummary,
        decision: &ForwardDecision,
        response: &ResponseMeta,
        now: Millis,
    ) -> (HttpTransaction, Option<Arc<MapDelta>>) {
        let mut st = self.state.lock();
        let ts = st.tick(now);
        let id = st.next_txn_id;
        st.next_txn_id += 1;
        st.transactions += 1;
        let (mut txn, event) = complete_transaction(id, request, decision, response, ts);
        let address = match decision {
            ForwardDecision::OpenTunnel(host, port) => format!("{host}:{port}"),
            _ => CanonicalUrl::parse(&txn.url).map_or_else(|_| txn.url.clone(), |u| u.to_string()),
        };
        txn.since_last_ms = st
            .last_request
            .insert(address, txn.started_at)
            .map(|prev| txn.started_at.saturating_sub(prev).max(0) as u64);
        st.append(ts, RecordBody::Transaction(txn.clone()));
        let delta = event.map(|mut ev| {
            ev.since_last_ms = txn.since_last_ms;
            st.append(ts, RecordBody::Navigation(ev.clone()));
            let delta = st.map.apply_event(&ev);
            st.journal(delta.revision, ts, JournalAction::Event { txn_id: id });
            self.publish(&mut st, delta)
        });
        if let Some(log) = st.log.as_mut() {
            if let Err(e) = log.sync_if_due() {
                st.fail("event log sync failed in", e);
            }
        }
        (txn, delta)
    }

    pub fn edit(&self, cmd: &EditCommand) -> Result<Arc<MapDelta>> {
        self.edit_at(cmd, now_millis())
    }

    pub fn edit_at(&self, cmd: &EditCommand, now: Millis) -> Result<Arc<MapDelta>> {
        let mut st = self.state.lock();
        let delta = st.map.edit(cmd)?;
        let ts = st.tick(now);
        st.append(ts, RecordBody::Edit { command: cmd.clone() });
        st.journal(delta.revision, ts, JournalAction::Edit { command: cmd.clone() });
        Ok(self.publish(&mut st, delta))
    }

    /// Closes dwell on the current page, as at the end of a session.
    pub fn finalize(&self, now: Millis) -> Option<Arc<MapDelta>> {
        let mut st = self.state.lock();
        let ts = st.tick(now);
        let delta = st.map.finalize_dwell(ts)?;
        st.append(ts, RecordBody::Finalize);
        st.journal(delta.revision, ts, JournalAction::Finalize);
        Some(self.publish(&mut st, delta))
    }

    pub fn snapshot(&self) -> SessionMap {
        self.state.lock().map.clone()
    }

    pub fn revision(&self) -> u64 {
        self.state.lock().map.revision
    }

    pub fn session_id(&self) -> Uuid {
        self.state.lock().map.session_id
    }

    pub fn sessions_dir(&self) -> &Path {
        &self.sessions_dir
    }

    /// Snapshot and live feed, positioned just after revision `since`.
    ///
    /// Without `since` the feed starts at the current revision. When `since`
    /// is too old, from the future, or the session changed, the backlog is a
    /// single reset.
    pub fn subscribe(&self, since: Option<u64>) -> Subscription {
        let st = self.state.lock();
        let live = self.tx.subscribe();
        let current = st.map.revision;
        let oldest = st.history.front().map_or(current + 1, |d| d.revision);
        let backlog = match since {
            None => Vec::new(),
            Some(r) if r == current => Vec::new(),
            Some(r) if r < current && r + 1 >= oldest => st
                .history
                .iter()
                .filter(|d| d.revision > r)
                .map(|d| Update::Delta(d.clone()))
                .collect(),
            Some(_) => vec![Update::Reset { session_id: st.map.session_id, revision: current }],
        };
        Subscription { backlog, live }
    }

    /// Writes the current map to `path`, or to the session's `map.json`.
    pub fn save(&self, path: Option<&Path>) -> Result<PathBuf> {
        let (map, target) = {
            let mut st = self.state.lock();
            st.sync();
            let target = path.map_or_else(|| st.paths.map.clone(), Path::to_path_buf);
            (st.map.clone(), target)
        };
        save_map(&map, &target)?;
        Ok(target)
    }

    /// Replaces the live session with a saved map. The previous session is
    /// finalized and saved first.
    pub fn load(&self, path: &Path) -> Result<SessionMap> {
        let loaded = load_map(path)?;
        let now = now_millis();
        let previous = {
            let mut st = self.state.lock();
            let ts = st.tick(now);
            if let Some(delta) = st.map.finalize_dwell(ts) {
                st.append(ts, RecordBody::Finalize);
                st.journal(delta.revision, ts, JournalAction::Finalize);
            }
            st.sync();
            let previous = (st.map.clone(), st.paths.map.clone());

            let mut next = HubState::open(&self.sessions_dir, loaded.clone(), ts);
            next.next_txn_id = st.next_txn_id;
            next.transactions = st.transactions;
            let ts = next.tick(ts);
            next.append(ts, RecordBody::Snapshot { map: Box::new(loaded.clone()) });
            next.journal(loaded.revision, ts, JournalAction::Load { path: path.to_path_buf() });
            next.sync();
            *st = next;
            let _ = self.tx.send(Update::Reset { session_id: loaded.session_id, revision: loaded.revision });
            previous
        };
        if let Err(e) = save_map(&previous.0, &previous.1) {
            self.state.lock().fail("saving the previous session failed in", e);
        }
        Ok(loaded)
    }

    /// Forces buffered log records to disk.
    pub fn flush(&self) {
        self.state.lock().sync();
    }

    /// Periodic maintenance: syncs logs whose interval has passed.
    pub fn tick_flush(&self) {
        let mut st = self.state.lock();
        for i in 0..2 {
            let w = if i == 0 { st.log.as_mut() } else { st.journal.as_mut() };
            if let Some(w) = w {
                if let Err(e) = w.sync_if_due() {
                    st.fail("sync failed in", e);
                    break;
                }
            }
        }
    }

    pub fn status(&self) -> HubStatus {
        let st = self.state.lock();
        HubStatus {
            session_id: st.map.session_id,
            started_at: st.map.started_at,
            revision: st.map.revision,
            pages: st.map.nodes().len(),
            transactions: st.transactions,
            session_dir: st.paths.dir.clone(),
            store_error: st.store_error.clone(),
        }
    }

    /// Every logged record across sessions, for reports.
    pub fn all_records(&self) -> Result<Vec<EventLogRecord>> {
        self.flush();
        read_sessions(&self.sessions_dir)
    }

    /// Finalizes and saves the session, for shutdown.
    pub fn close(&self) -> Result<PathBuf> {
        self.finalize(now_millis());
        self.save(None)
    }
}
