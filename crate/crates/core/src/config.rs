//! Runtime configuration shared by the proxy, the session hub and the control API.

use std::net::SocketAddr;
use std::path::PathBuf;

use crate::error::{Error, Result};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8899";
pub const DEFAULT_CONTROL: &str = "127.0.0.1:8900";
pub const DEFAULT_IDLE_THRESHOLD_SECS: u64 = 300;
pub const DEFAULT_CACHE_MAX_RESIDENCE_SECS: u64 = 3600;
pub const DEFAULT_CACHE_MAX_IDLE_SECS: u64 = 600;
pub const DEFAULT_CACHE_CAPACITY_BYTES: u64 = 256 * 1024 * 1024;

/// Freshness and size limits for the proxy cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CachePolicy {
    /// Longest time an entry may stay in the cache, in seconds.
    pub max_residence: u64,
    /// Longest time an entry may go unused, in seconds.
    pub max_idle: u64,
    pub capacity_bytes: u64,
}

impl Default for CachePolicy {
    fn default() -> Self {
        Self {
            max_residence: DEFAULT_CACHE_MAX_RESIDENCE_SECS,
            max_idle: DEFAULT_CACHE_MAX_IDLE_SECS,
            capacity_bytes: DEFAULT_CACHE_CAPACITY_BYTES,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProxyConfig {
    pub listen_address: SocketAddr,
    pub control_address: SocketAddr,
    /// Dwell gaps longer than this are clipped, in seconds.
    pub idle_threshold: u64,
    pub cache: CachePolicy,
    pub data_dir: PathBuf,
    /// Offset from UTC, in minutes, used to bucket daily reports.
    pub utc_offset_minutes: i32,
    pub allow_remote_control: bool,
    /// Directory holding the built map UI; a placeholder page is served when absent.
    pub ui_dir: Option<PathBuf>,
}

impl ProxyConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            listen_address: DEFAULT_LISTEN.parse().expect("valid default"),
            control_address: DEFAULT_CONTROL.parse().expect("valid default"),
            idle_threshold: DEFAULT_IDLE_THRESHOLD_SECS,
            cache: CachePolicy::default(),
            data_dir: data_dir.into(),
            utc_offset_minutes: 0,
            allow_remote_control: false,
            ui_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.idle_threshold == 0 {
            return Err(Error::Config("idle threshold must be positive".into()));
        }
        if self.cache.max_idle == 0 {
            return Err(Error::Config("cache max idle must be positive".into()));
        }
        if self.cache.max_residence < self.cache.max_idle {
            return Err(Error::Config(format!(
                "cache max residence ({}s) must be at least cache max idle ({}s)",
                self.cache.max_residence, self.cache.max_idle
            )));
        }
        // Port 0 asks the OS for an ephemeral port, so two zero ports never collide.
        if self.listen_address == self.control_address && self.listen_address.port() != 0 {
            return Err(Error::Config(format!(
                "proxy and control API cannot share {}",
                self.listen_address
            )));
        }
        if !(-18 * 60..=18 * 60).contains(&self.utc_offset_minutes) {
            return Err(Error::Config("utc offset out of range".into()));
        }
        Ok(())
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join("sessions")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ProxyConfig::new("/tmp/wf").validate().unwrap();
    }

    #[test]
    fn rejects_bad_durations() {
        let mut cfg = ProxyConfig::new("/tmp/wf");
        cfg.idle_threshold = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = ProxyConfig::new("/tmp/wf");
        cfg.cache.max_residence = 10;
        cfg.cache.max_idle = 20;
        assert!(cfg.validate().is_err());

        let mut cfg = ProxyConfig::new("/tmp/wf");
        cfg.cache.max_idle = 0;
        cfg.cache.max_residence = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_shared_address() {
        let mut cfg = ProxyConfig::new("/tmp/wf");
        cfg.control_address = cfg.listen_address;
        assert!(cfg.validate().is_err());
    }
}
