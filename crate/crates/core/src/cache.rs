//! In-memory document cache with residence, idle and capacity limits.
//!
//! Every operation first drops entries that have outlived either time bound
//! at the supplied clock, so no expired entry survives a call. Capacity
//! pressure evicts the least recently accessed entries first.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use bytes::Bytes;
use serde::Serialize;

use crate::classify::CanonicalUrl;
use crate::config::CachePolicy;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Key for a request, or `None` when the method is never cached.
pub fn cache_key(method: &str, url: &CanonicalUrl) -> Option<CacheKey> {
    (method == "GET").then(|| CacheKey(format!("GET {url}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Bytes,
    pub stored_at: u64,
    pub origin_last_modified: Option<String>,
    pub last_access: u64,
    pub hit_count: u64,
}

impl CacheEntry {
    pub fn new(key: CacheKey, status: u16, headers: Vec<(String, String)>, body: Bytes) -> Self {
        let origin_last_modified = header(&headers, "last-modified").map(str::to_owned);
        Self {
            key,
            status,
            headers,
            body,
            stored_at: 0,
            origin_last_modified,
            last_access: 0,
            hit_count: 0,
        }
    }

    pub fn size(&self) -> u64 {
        self.body.len() as u64
    }

    fn content_length_matches(&self) -> bool {
        match header(&self.headers, "content-length") {
            Some(v) => v.trim().parse::<u64>().is_ok_and(|n| n == self.size()),
            None => true,
        }
    }
}

fn header<'a>(headers: &'a [(String, String)], name: &str) -> Option<&'a str> {
    headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| v.as_str())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MissReason {
    Absent,
    ExpiredResidence,
    ExpiredIdle,
    StaleOrigin,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Lookup {
    Hit(CacheEntry),
    Miss(MissReason),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
    pub capacity_bytes: u64,
    pub hits: u64,
    pub misses: u64,
    pub misses_absent: u64,
    pub misses_expired_residence: u64,
    pub misses_expired_idle: u64,
    pub misses_stale_origin: u64,
    pub revalidated: u64,
    pub evictions: u64,
}

#[derive(Debug)]
pub struct ProxyCache {
    policy: CachePolicy,
    entries: HashMap<CacheKey, CacheEntry>,
    by_access: BTreeSet<(u64, CacheKey)>,
    by_stored: BTreeSet<(u64, CacheKey)>,
    total_bytes: u64,
    stats: CacheStats,
}

impl ProxyCache {
    pub fn new(policy: CachePolicy) -> Self {
        Self {
            policy,
            entries: HashMap::new(),
            by_access: BTreeSet::new(),
            by_stored: BTreeSet::new(),
            total_bytes: 0,
            stats: CacheStats::default(),
        }
    }

    pub fn policy(&self) -> CachePolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    pub fn get(&self, key: &CacheKey) -> Option<&CacheEntry> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &CacheKey> {
        self.entries.keys()
    }

    fn expiry(&self, entry: &CacheEntry, now: u64) -> Option<MissReason> {
        if now.saturating_sub(entry.stored_at) > self.policy.max_residence {
            Some(MissReason::ExpiredResidence)
        } else if now.saturating_sub(entry.last_access) > self.policy.max_idle {
            Some(MissReason::ExpiredIdle)
        } else {
            None
        }
    }

    pub fn lookup(&mut self, key: &CacheKey, now: u64) -> Lookup {
        let verdict = match self.entries.get(key) {
            None => Err(MissReason::Absent),
            Some(entry) => self.expiry(entry, now).map_or(Ok(()), Err),
        };
        self.expire(now);
        match verdict {
            Err(reason) => {
                self.count_miss(reason);
                Lookup::Miss(reason)
            }
            Ok(()) => {
                let mut entry = self.remove(key).expect("fresh entry survives expiry");
                entry.last_access = entry.last_access.max(now);
                entry.hit_count += 1;
                let hit = entry.clone();
                self.put(entry);
                self.stats.hits += 1;
                Lookup::Hit(hit)
            }
        }
    }

    /// Stores `entry` at clock `now` and returns every key removed by the call:
    /// expired entries first (ascending key), then capacity victims in
    /// least-recently-accessed order.
    pub fn insert(&mut self, mut entry: CacheEntry, now: u64) -> Vec<CacheKey> {
        let mut removed = self.expire(now);
        if entry.status != 200 || entry.size() > self.policy.capacity_bytes || !entry.content_length_matches() {
            return removed;
        }
        self.remove(&entry.key);
        entry.stored_at = now;
        entry.last_access = now;
        let key = entry.key.clone();
        self.put(entry);
        while self.total_bytes > self.policy.capacity_bytes {
            let victim = self
                .by_access
                .iter()
                .find(|(_, k)| *k != key)
                .map(|(_, k)| k.clone())
                .expect("new entry alone fits capacity");
            self.remove(&victim);
            self.stats.evictions += 1;
            removed.push(victim);
        }
        removed
    }

    /// Removes every entry that violates a time bound at `now`, ascending by key.
    pub fn sweep(&mut self, now: u64) -> Vec<CacheKey> {
        self.expire(now)
    }

    /// Whether a hit should be confirmed with the origin before serving.
    pub fn needs_revalidation(&self, entry: &CacheEntry, now: u64) -> bool {
        entry.origin_last_modified.is_some()
            && now.saturating_sub(entry.stored_at) * 2 > self.policy.max_residence
    }

    /// The origin answered 304: the stored copy is current again.
    pub fn mark_revalidated(&mut self, key: &CacheKey, now: u64) -> bool {
        let Some(mut entry) = self.remove(key) else {
            return false;
        };
        entry.stored_at = now;
        entry.last_access = now;
        self.put(entry);
        self.stats.revalidated += 1;
        true
    }

    /// The origin sent a newer document: it replaces the stored copy.
    pub fn replace_stale(&mut self, entry: CacheEntry, now: u64) -> Vec<CacheKey> {
        self.stats.misses_stale_origin += 1;
        self.stats.misses += 1;
        // The hit recorded for the stale copy did not deliver it.
        self.stats.hits = self.stats.hits.saturating_sub(1);
        self.remove(&entry.key);
        self.insert(entry, now)
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            entries: self.entries.len(),
            bytes: self.total_bytes,
            capacity_bytes: self.policy.capacity_bytes,
            ..self.stats.clone()
        }
    }

    fn count_miss(&mut self, reason: MissReason) {
        self.stats.misses += 1;
        match reason {
            MissReason::Absent => self.stats.misses_absent += 1,
            MissReason::ExpiredResidence => self.stats.misses_expired_residence += 1,
            MissReason::ExpiredIdle => self.stats.misses_expired_idle += 1,
            MissReason::StaleOrigin => self.stats.misses_stale_origin += 1,
        }
    }

    fn expire(&mut self, now: u64) -> Vec<CacheKey> {
        let mut doomed = BTreeSet::new();
        let residence_cutoff = now.checked_sub(self.policy.max_residence);
        let idle_cutoff = now.checked_sub(self.policy.max_idle);
        if let Some(cutoff) = residence_cutoff {
            doomed.extend(self.by_stored.iter().take_while(|(t, _)| *t < cutoff).map(|(_, k)| k.clone()));
        }
        if let Some(cutoff) = idle_cutoff {
            doomed.extend(self.by_access.iter().take_while(|(t, _)| *t < cutoff).map(|(_, k)| k.clone()));
        }
        for key in &doomed {
            self.remove(key);
        }
        doomed.into_iter().collect()
    }

    fn put(&mut self, entry: CacheEntry) {
        self.total_bytes += entry.size();
        self.by_access.insert((entry.last_access, entry.key.clone()));
        self.by_stored.insert((entry.stored_at, entry.key.clone()));
        self.entries.insert(entry.key.clone(), entry);
    }

    fn remove(&mut self, key: &CacheKey) -> Option<CacheEntry> {
        let entry = self.entries.remove(key)?;
        self.total_bytes -= entry.size();
        self.by_access.remove(&(entry.last_access, key.clone()));
        self.by_stored.remove(&(entry.stored_at, key.clone()));
        Some(entry)
    }
}
