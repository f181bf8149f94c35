//! On-disk session data: the append-only event log, saved map files and
//! DOT/SVG exports.
//!
//! Each session lives in `<data_dir>/sessions/<session_id>/` holding
//! `events.jsonl`, `journal.jsonl` and the last saved `map.json`.

mod export;
mod log;
mod mapfile;

use std::path::{Path, PathBuf};

use uuid::Uuid;

pub use self::export::{export_dot, export_svg};
pub use self::log::{
    read_log, read_sessions, replay, EventLogRecord, JournalAction, JournalEntry, JsonlWriter, LogContents,
    RecordBody,
};
pub use self::mapfile::{load_map, save_map};

/// File locations for one session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionPaths {
    pub dir: PathBuf,
    pub events: PathBuf,
    pub journal: PathBuf,
    pub map: PathBuf,
}

impl SessionPaths {
    pub fn new(sessions_dir: &Path, session_id: Uuid) -> Self {
        let dir = sessions_dir.join(session_id.to_string());
        Self {
            events: dir.join("events.jsonl"),
            journal: dir.join("journal.jsonl"),
            map: dir.join("map.json"),
            dir,
        }
    }
}
