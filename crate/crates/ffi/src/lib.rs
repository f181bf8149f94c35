//! C ABI over the wayfinder core.
//!
//! Sessions and caches are opaque handles. Every fallible call returns a
//! [`WfStatus`]; on failure [`wf_last_error`] describes what went wrong on
//! the calling thread. Strings handed out by the library must be released
//! with [`wf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use wayfinder::cache::{cache_key, CacheEntry, Lookup, MissReason, ProxyCache};
use wayfinder::classify::CanonicalUrl;
use wayfinder::config::CachePolicy;
use wayfinder::graph::{EditCommand, NavigationEvent, SessionMap};
use wayfinder::layout::{render_view, LayoutOptions};
use wayfinder::store::{export_dot, export_svg, load_map, save_map};
use uuid::Uuid;
use wayfinder::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    NotFound = 4,
    Cycle = 5,
    InvalidEdit = 6,
    Version = 7,
    Parse = 8,
    Io = 9,
    InvalidUrl = 10,
    Config = 11,
    Panic = 12,
}

/// Outcome of a cache lookup.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WfLookup {
    Hit = 0,
    Absent = 1,
    ExpiredResidence = 2,
    ExpiredIdle = 3,
    StaleOrigin = 4,
}

/// A navigation map being built or edited.
pub struct WfSession {
    map: SessionMap,
}

/// A document cache with residence, idle and capacity limits.
pub struct WfCache {
    cache: ProxyCache,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

struct Failure(WfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NodeNotFound(_) | Error::EdgeNotFound(_) => WfStatus::NotFound,
            Error::Cycle { .. } => WfStatus::Cycle,
            Error::InvalidEdit(_) => WfStatus::InvalidEdit,
            Error::Version { .. } => WfStatus::Version,
            Error::Parse { .. } => WfStatus::Parse,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => WfStatus::NotFound,
            Error::Io(_) => WfStatus::Io,
            Error::InvalidUrl { .. } => WfStatus::InvalidUrl,
            Error::Config(_) => WfStatus::Config,
            Error::Json(_) => WfStatus::InvalidJson,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> WfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            WfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            WfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(WfStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(WfStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| Failure(WfStatus::NullArgument, format!("{name} is null")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| Failure(WfStatus::NullArgument, format!("{name} is null")))
}

fn json<T: serde::Serialize + ?Sized>(v: &T) -> FfiResult<*mut c_char> {
    let s = serde_json::to_string(v).map_err(|e| Failure(WfStatus::InvalidJson, e.to_string()))?;
    give_string(s)
}

fn give_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(WfStatus::InvalidUtf8, "output contains a NUL byte".into()))
}

fn parse_json<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> FfiResult<T> {
    serde_json::from_str(s).map_err(|e| Failure(WfStatus::InvalidJson, format!("invalid {what}: {e}")))
}

fn idle(idle_threshold_ms: u64) -> Option<u64> {
    (idle_threshold_ms > 0).then_some(idle_threshold_ms)
}

/// Message for the last failed call on this thread, or an empty string.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn wf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn wf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Sessions

/// Starts an empty session. `idle_threshold_ms` of 0 disables dwell capping.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wf_session_new(started_at_ms: i64, idle_threshold_ms: u64, out: *mut *mut WfSession) -> WfStatus {
    guard(|| {
        let out = self::out(out, "out")?;
        let map = SessionMap::new(Uuid::new_v4(), started_at_ms, idle(idle_threshold_ms));
        *out = Box::into_raw(Box::new(WfSession { map }));
        Ok(())
    })
}

/// Builds a session from newline-separated page URLs, chained in order.
///
/// # Safety
/// `urls` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wf_session_seed(
    urls: *const c_char,
    started_at_ms: i64,
    idle_threshold_ms: u64,
    out: *mut *mut WfSession,
) -> WfStatus {
    guard(|| {
        let urls = str_arg(urls, "urls")?;
        let out = self::out(out, "out")?;
        let list = urls
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(CanonicalUrl::parse)
            .collect::<Result<Vec<_>, _>>()?;
        let map = SessionMap::seed_from_list(&list, Uuid::new_v4(), started_at_ms, idle(idle_threshold_ms))?;
        *out = Box::into_raw(Box::new(WfSession { map }));
        Ok(())
    })
}

/// Opens a map file written by [`wf_session_save`] or the proxy.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wf_session_load(path: *const c_char, out: *mut *mut WfSession) -> WfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = self::out(out, "out")?;
        let map = load_map(Path::new(path))?;
        *out = Box::into_raw(Box::new(WfSession { map }));
        Ok(())
    })
}

/// Releases a session. Null is ignored.
///
/// # Safety
/// `session` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wf_session_free(session: *mut WfSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// # Safety
/// `session` and `path` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_session_save(session: *mut WfSession, path: *const c_char) -> WfStatus {
    guard(|| {
        let s = handle(session, "session")?;
        let path = str_arg(path, "path")?;
        save_map(&s.map, Path::new(path))?;
        Ok(())
    })
}

/// Current revision, or 0 for a null handle.
///
/// # Safety
/// `session` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn wf_session_revision(session: *const WfSession) -> u64 {
    session.as_ref().map_or(0, |s| s.map.revision)
}

/// Records one page visit. `referer` and `title` may be null.
/// `out_revision` may be null.
///
/// # Safety
/// Non-null pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_session_navigate(
    session: *mut WfSession,
    ts_ms: i64,
    url: *const c_char,
    referer: *const c_char,
    title: *const c_char,
    out_revision: *mut u64,
) -> WfStatus {
    guard(|| {
        let s = handle(session, "session")?;
        let url = CanonicalUrl::parse(str_arg(url, "url")?)?;
        let referer = opt_str_arg(referer, "referer")?.map(CanonicalUrl::parse).transpose()?;
        let title = opt_str_arg(title, "title")?.map(str::to_owned);
        let txn_id = s.map.revision + 1;
        let delta = s.map.apply_event(&NavigationEvent {
            ts: ts_ms,
            url,
            referer,
            title,
            opaque: false,
            txn_id,
            since_last_ms: None,
        });
        if let Some(r) = out_revision.as_mut() {
            *r = delta.revision;
        }
        Ok(())
    })
}

/// Applies a navigation event given as JSON (the event-log shape).
///
/// # Safety
/// Non-null pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_session_apply_event(
    session: *mut WfSession,
    event_json: *const c_char,
    out_delta_json: *mut *mut c_char,
) -> WfStatus {
    guard(|| {
        let s = handle(session, "session")?;
        let ev: NavigationEvent = parse_json(str_arg(event_json, "event_json")?, "event")?;
        let delta = s.map.apply_event(&ev);
        if let Some(o) = out_delta_json.as_mut() {
            *o = json(&delta)?;
        }
        Ok(())
    })
}

/// Applies an edit command given as JSON, e.g. `{"op":"remove_node","node":3}`.
/// On success `out_delta_json`, if non-null, receives the resulting delta.
///
/// # Safety
/// Non-null pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_session_edit(
    session: *mut WfSession,
    command_json: *const c_char,
    out_delta_json: *mut *mut c_char,
) -> WfStatus {
    guard(|| {
        let s = handle(session, "session")?;
        let cmd: EditCommand = parse_json(str_arg(command_json, "command_json")?, "edit command")?;
        let delta = s.map.edit(&cmd)?;
        if let Some(o) = out_delta_json.as_mut() {
            *o = json(&delta)?;
        }
        Ok(())
    })
}

/// Closes dwell on the current page at `now_ms`. A no-op when no page is current.
///
/// # Safety
/// `session` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_session_finalize(session: *mut WfSession, now_ms: i64) -> WfStatus {
    guard(|| {
        handle(session, "session")?.map.finalize_dwell(now_ms);
        Ok(())
    })
}

/// The whole map as JSON.
///
/// # Safety
/// `session` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_session_map_json(session: *mut WfSession, out: *mut *mut c_char) -> WfStatus {
    guard(|| {
        let s = handle(session, "session")?;
        *self::out(out, "out")? = json(&s.map)?;
        Ok(())
    })
}

unsafe fn options(options_json: *const c_char) -> FfiResult<LayoutOptions> {
    let opts = match opt_str_arg(options_json, "options_json")? {
        None => LayoutOptions::default(),
        Some(s) => parse_json(s, "layout options")?,
    };
    opts.validate()?;
    Ok(opts)
}

/// Positioned layout as JSON. `options_json` may be null for defaults, or
/// hold any subset of `level`, `max_depth`, `display_mode`, `node_width`,
/// `node_height`, `h_gap`, `v_gap`.
///
/// # Safety
/// `session` and `out` must be valid; `options_json` null or valid.
#[no_mangle]
pub unsafe extern "C" fn wf_session_layout_json(
    session: *mut WfSession,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> WfStatus {
    guard(|| {
        let s = handle(session, "session")?;
        let layout = render_view(&s.map, &options(options_json)?)?;
        *self::out(out, "out")? = json(&layout)?;
        Ok(())
    })
}

/// Graphviz rendering of the map.
///
/// # Safety
/// `session` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_session_export_dot(session: *mut WfSession, out: *mut *mut c_char) -> WfStatus {
    guard(|| {
        let s = handle(session, "session")?;
        *self::out(out, "out")? = give_string(export_dot(&s.map))?;
        Ok(())
    })
}

/// SVG drawing of the laid-out map; options as for [`wf_session_layout_json`].
///
/// # Safety
/// `session` and `out` must be valid; `options_json` null or valid.
#[no_mangle]
pub unsafe extern "C" fn wf_session_export_svg(
    session: *mut WfSession,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> WfStatus {
    guard(|| {
        let s = handle(session, "session")?;
        let layout = render_view(&s.map, &options(options_json)?)?;
        *self::out(out, "out")? = give_string(export_svg(&layout))?;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Cache

/// Creates a cache. Times are in seconds of the caller's clock.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_cache_new(
    max_residence_s: u64,
    max_idle_s: u64,
    capacity_bytes: u64,
    out: *mut *mut WfCache,
) -> WfStatus {
    guard(|| {
        let out = self::out(out, "out")?;
        let policy = CachePolicy { max_residence: max_residence_s, max_idle: max_idle_s, capacity_bytes };
        *out = Box::into_raw(Box::new(WfCache { cache: ProxyCache::new(policy) }));
        Ok(())
    })
}

/// # Safety
/// `cache` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wf_cache_free(cache: *mut WfCache) {
    if !cache.is_null() {
        drop(Box::from_raw(cache));
    }
}

fn key_for(url: &str) -> FfiResult<wayfinder::cache::CacheKey> {
    Ok(cache_key("GET", &CanonicalUrl::parse(url)?).expect("GET is cacheable"))
}

/// Stores a 200 response body for a GET of `url` at clock `now_s`.
/// `out_removed`, if non-null, receives how many entries the call removed.
///
/// # Safety
/// `body` must point to `len` readable bytes (or be null with `len` 0).
#[no_mangle]
pub unsafe extern "C" fn wf_cache_insert(
    cache: *mut WfCache,
    url: *const c_char,
    body: *const u8,
    len: usize,
    now_s: u64,
    out_removed: *mut usize,
) -> WfStatus {
    guard(|| {
        let c = handle(cache, "cache")?;
        let key = key_for(str_arg(url, "url")?)?;
        let bytes = if len == 0 {
            Vec::new()
        } else if body.is_null() {
            return Err(Failure(WfStatus::NullArgument, "body is null".into()));
        } else {
            std::slice::from_raw_parts(body, len).to_vec()
        };
        let removed = c.cache.insert(CacheEntry::new(key, 200, Vec::new(), bytes.into()), now_s);
        if let Some(o) = out_removed.as_mut() {
            *o = removed.len();
        }
        Ok(())
    })
}

/// Looks up a GET of `url` at clock `now_s`.
///
/// # Safety
/// `cache`, `url` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_cache_lookup(cache: *mut WfCache, url: *const c_char, now_s: u64, out: *mut WfLookup) -> WfStatus {
    guard(|| {
        let c = handle(cache, "cache")?;
        let key = key_for(str_arg(url, "url")?)?;
        *self::out(out, "out")? = match c.cache.lookup(&key, now_s) {
            Lookup::Hit(_) => WfLookup::Hit,
            Lookup::Miss(MissReason::Absent) => WfLookup::Absent,
            Lookup::Miss(MissReason::ExpiredResidence) => WfLookup::ExpiredResidence,
            Lookup::Miss(MissReason::ExpiredIdle) => WfLookup::ExpiredIdle,
            Lookup::Miss(MissReason::StaleOrigin) => WfLookup::StaleOrigin,
        };
        Ok(())
    })
}

/// Drops expired entries; `out_removed` may be null.
///
/// # Safety
/// `cache` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_cache_sweep(cache: *mut WfCache, now_s: u64, out_removed: *mut usize) -> WfStatus {
    guard(|| {
        let removed = handle(cache, "cache")?.cache.sweep(now_s);
        if let Some(o) = out_removed.as_mut() {
            *o = removed.len();
        }
        Ok(())
    })
}

/// Hit, miss and size counters as JSON.
///
/// # Safety
/// `cache` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_cache_stats_json(cache: *mut WfCache, out: *mut *mut c_char) -> WfStatus {
    guard(|| {
        let c = handle(cache, "cache")?;
        *self::out(out, "out")? = json(&c.cache.stats())?;
        Ok(())
    })
}
