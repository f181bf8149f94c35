use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::{Error, Result};
use crate::graph::{EditCommand, Millis, NavigationEvent, SessionMap};
use crate::proxy::HttpTransaction;

/// Records buffered before the log is flushed and synced.
pub const FLUSH_EVERY_RECORDS: usize = 32;
/// Longest time a record may sit unsynced while appends keep arriving.
pub const FLUSH_INTERVAL: Duration = Duration::from_secs(1);

/// One line of `events.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLogRecord {
    pub session_id: Uuid,
    /// When the record was appended; never decreases within a session.
    pub logged_at: Millis,
    #[serde(flatten)]
    pub body: RecordBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordBody {
    SessionStart {
        started_at: Millis,
        #[serde(default)]
        idle_threshold_ms: Option<u64>,
    },
    Transaction(HttpTransaction),
    Navigation(NavigationEvent),
    Edit { command: EditCommand },
    /// Dwell on the current page was closed at `logged_at`.
    Finalize,
    /// Full map state; replay restarts from here. Written when a session is
    /// loaded from a file or seeded.
    Snapshot { map: Box<SessionMap> },
}

/// One line of `journal.jsonl`: which revision each change produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub revision: u64,
    pub ts: Millis,
    #[serde(flatten)]
    pub action: JournalAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum JournalAction {
    Event { txn_id: u64 },
    Edit { command: EditCommand },
    Finalize,
    Load { path: PathBuf },
    Seed,
}

/// Append-only JSON-lines file. Each record is written as one line with a
/// single buffered write; the buffer is flushed and synced every
/// [`FLUSH_EVERY_RECORDS`] records or [`FLUSH_INTERVAL`], whichever comes first.
#[derive(Debug)]
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
    pending: usize,
    last_sync: Instant,
}

impl JsonlWriter {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            out: BufWriter::with_capacity(64 * 1024, file),
            pending: 0,
            last_sync: Instant::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.out.write_all(&line)?;
        self.pending += 1;
        if self.pending >= FLUSH_EVERY_RECORDS || self.last_sync.elapsed() >= FLUSH_INTERVAL {
            self.sync()?;
        }
        Ok(())
    }

    /// Syncs if anything is pending and the interval has passed.
    pub fn sync_if_due(&mut self) -> io::Result<()> {
        if self.pending > 0 && self.last_sync.elapsed() >= FLUSH_INTERVAL {
            self.sync()?;
        }
        Ok(())
    }

    pub fn sync(&mut self) -> io::Result<()> {
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        self.pending = 0;
        self.last_sync = Instant::now();
        Ok(())
    }
}

impl Drop for JsonlWriter {
    fn drop(&mut self) {
        let _ = self.sync();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogContents {
    pub records: Vec<EventLogRecord>,
    /// The final line was incomplete and has been skipped.
    pub truncated_tail: bool,
}

/// Reads an event log. An unterminated final line that does not parse is a
/// write cut short by a crash and is skipped; any other bad line is an error
/// carrying its byte offset.
pub fn read_log(path: &Path) -> Result<LogContents> {
    let data = fs::read(path)?;
    let mut records = Vec::new();
    let mut truncated_tail = false;
    let mut offset = 0usize;
    while offset < data.len() {
        let (line, terminated) = match data[offset..].iter().position(|&b| b == b'\n') {
            Some(n) => (&data[offset..offset + n], true),
            None => (&data[offset..], false),
        };
        let next = offset + line.len() + usize::from(terminated);
        if line.iter().all(u8::is_ascii_whitespace) {
            offset = next;
            continue;
        }
        match serde_json::from_slice::<EventLogRecord>(line) {
            Ok(rec) => records.push(rec),
            Err(_) if !terminated => truncated_tail = true,
            Err(e) => {
                return Err(Error::Parse {
                    offset: offset as u64,
                    message: format!("{}: {e}", path.display()),
                })
            }
        }
        offset = next;
    }
    Ok(LogContents { records, truncated_tail })
}

/// Rebuilds the map of the first session found in `records`.
pub fn replay(records: &[EventLogRecord]) -> Result<SessionMap> {
    let Some(first) = records.first() else {
        return Err(Error::Config("event log is empty".into()));
    };
    let session = first.session_id;
    let mut map: Option<SessionMap> = None;
    for rec in records.iter().filter(|r| r.session_id == session) {
        match &rec.body {
            RecordBody::SessionStart { started_at, idle_threshold_ms } => {
                map = Some(SessionMap::new(session, *started_at, *idle_threshold_ms));
            }
            RecordBody::Snapshot { map: snapshot, .. } => map = Some((**snapshot).clone()),
            RecordBody::Transaction(_) => {}
            body => {
                let Some(m) = map.as_mut() else {
                    return Err(Error::Config(format!("log for {session} has records before its start")));
                };
                match body {
                    RecordBody::Navigation(ev) => {
                        m.apply_event(ev);
                    }
                    RecordBody::Edit { command, .. } => {
                        m.edit(command)?;
                    }
                    RecordBody::Finalize => {
                        m.finalize_dwell(rec.logged_at);
                    }
                    _ => unreachable!("handled above"),
                }
            }
        }
    }
    map.ok_or_else(|| Error::Config(format!("log for {session} has no start record")))
}

/// Records from every session log under `sessions_dir`, session by session.
/// Unreadable logs are skipped with a warning.
pub fn read_sessions(sessions_dir: &Path) -> Result<Vec<EventLogRecord>> {
    let mut dirs: Vec<PathBuf> = match fs::read_dir(sessions_dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    dirs.sort();
    let mut out = Vec::new();
    for dir in dirs {
        let path = dir.join("events.jsonl");
        if !path.is_file() {
            continue;
        }
        match read_log(&path) {
            Ok(contents) => out.extend(contents.records),
            Err(e) => tracing::warn!("skipping {}: {e}", path.display()),
        }
    }
    Ok(out)
}
