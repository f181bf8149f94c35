use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::{SessionMap, SCHEMA_VERSION};

/// Writes the map as pretty JSON, replacing `path` atomically.
pub fn save_map(map: &SessionMap, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut f, map)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Deserialize)]
struct Probe {
    schema_version: Option<u32>,
}

fn byte_offset(data: &[u8], line: usize, column: usize) -> u64 {
    let line_start: usize = data
        .split_inclusive(|&b| b == b'\n')
        .take(line.saturating_sub(1))
        .map(<[u8]>::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(data.len()) as u64
}

fn parse_error(data: &[u8], path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        offset: byte_offset(data, e.line(), e.column()),
        message: format!("{}: {e}", path.display()),
    }
}

/// Reads a saved map. Files from another schema version are refused
/// before the rest of the document is interpreted.
pub fn load_map(path: &Path) -> Result<SessionMap> {
    let data = fs::read(path)?;
    let probe: Probe = serde_json::from_slice(&data).map_err(|e| parse_error(&data, path, e))?;
    match probe.schema_version {
        Some(SCHEMA_VERSION) => {}
        Some(found) => return Err(Error::Version { found, supported: SCHEMA_VERSION }),
        None => {
            return Err(Error::Parse { offset: 0, message: format!("{}: missing schema_version", path.display()) })
        }
    }
    let map: SessionMap = serde_json::from_slice(&data).map_err(|e| parse_error(&data, path, e))?;
    map.validate()
        .map_err(|why| Error::Parse { offset: 0, message: format!("{}: {why}", path.display()) })?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::CanonicalUrl;
    use crate::graph::NavigationEvent;
    use uuid::Uuid;

    fn sample() -> SessionMap {
        let mut m = SessionMap::new(Uuid::new_v4(), 1_000, Some(300_000));
        for (i, p) in ["a", "b", "a"].iter().enumerate() {
            m.apply_event(&NavigationEvent {
                ts: 1_000 + i as i64 * 1_337,
                url: CanonicalUrl::parse(&format!("http://a.test/{p}")).unwrap(),
                referer: None,
                title: Some("Ünïcode \"quoted\"".into()),
                opaque: false,
                txn_id: i as u64,
                since_last_ms: None,
            });
        }
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m/map.json");
        let m = sample();
        save_map(&m, &path).unwrap();
        assert_eq!(load_map(&path).unwrap(), m);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.trim_start().starts_with("{\n  \"schema_version\": 1"));
    }

    #[test]
    fn newer_schema_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.json");
        let mut v = serde_json::to_value(sample()).unwrap();
        v["schema_version"] = 2.into();
        fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
        assert!(matches!(load_map(&path), Err(Error::Version { found: 2, supported: 1 })));
    }

    #[test]
    fn syntax_error_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.json");
        fs::write(&path, b"{\n  \"schema_version\": 1,\n  oops").unwrap();
        match load_map(&path) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 27),
            other => panic!("{other:?}"),
        }
    }
}
