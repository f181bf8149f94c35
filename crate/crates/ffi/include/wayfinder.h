#ifndef WAYFINDER_H
#define WAYFINDER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum WfStatus {
  WF_STATUS_OK = 0,
  WF_STATUS_NULL_ARGUMENT = 1,
  WF_STATUS_INVALID_UTF8 = 2,
  WF_STATUS_INVALID_JSON = 3,
  WF_STATUS_NOT_FOUND = 4,
  WF_STATUS_CYCLE = 5,
  WF_STATUS_INVALID_EDIT = 6,
  WF_STATUS_VERSION = 7,
  WF_STATUS_PARSE = 8,
  WF_STATUS_IO = 9,
  WF_STATUS_INVALID_URL = 10,
  WF_STATUS_CONFIG = 11,
  WF_STATUS_PANIC = 12,
} WfStatus;

/*
 Outcome of a cache lookup.
 */
typedef enum WfLookup {
  WF_LOOKUP_HIT = 0,
  WF_LOOKUP_ABSENT = 1,
  WF_LOOKUP_EXPIRED_RESIDENCE = 2,
  WF_LOOKUP_EXPIRED_IDLE = 3,
  WF_LOOKUP_STALE_ORIGIN = 4,
} WfLookup;

/*
 A document cache with residence, idle and capacity limits.
 */
typedef struct WfCache WfCache;

/*
 A navigation map being built or edited.
 */
typedef struct WfSession WfSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or an empty string.
 Valid until the next call on the same thread.
 */
const char *wf_last_error(void);

/*
 Library version as a static string.
 */
const char *wf_version(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void wf_string_free(char *s);

/*
 Starts an empty session. `idle_threshold_ms` of 0 disables dwell capping.

 # Safety
 `out` must be a valid pointer.
 */
enum WfStatus wf_session_new(int64_t started_at_ms,
                             uint64_t idle_threshold_ms,
                             struct WfSession **out);

/*
 Builds a session from newline-separated page URLs, chained in order.

 # Safety
 `urls` must be a NUL-terminated string and `out` a valid pointer.
 */
enum WfStatus wf_session_seed(const char *urls,
                              int64_t started_at_ms,
                              uint64_t idle_threshold_ms,
                              struct WfSession **out);

/*
 Opens a map file written by [`wf_session_save`] or the proxy.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum WfStatus wf_session_load(const char *path, struct WfSession **out);

/*
 Releases a session. Null is ignored.

 # Safety
 `session` must come from this library and not have been freed.
 */
void wf_session_free(struct WfSession *session);

/*
 # Safety
 `session` and `path` must be valid.
 */
enum WfStatus wf_session_save(struct WfSession *session, const char *path);

/*
 Current revision, or 0 for a null handle.

 # Safety
 `session` must be null or valid.
 */
uint64_t wf_session_revision(const struct WfSession *session);

/*
 Records one page visit. `referer` and `title` may be null.
 `out_revision` may be null.

 # Safety
 Non-null pointers must be valid.
 */
enum WfStatus wf_session_navigate(struct WfSession *session,
                                  int64_t ts_ms,
                                  const char *url,
                                  const char *referer,
                                  const char *title,
                                  uint64_t *out_revision);

/*
 Applies a navigation event given as JSON (the event-log shape).

 # Safety
 Non-null pointers must be valid.
 */
enum WfStatus wf_session_apply_event(struct WfSession *session,
                                     const char *event_json,
                                     char **out_delta_json);

/*
 Applies an edit command given as JSON, e.g. `{"op":"remove_node","node":3}`.
 On success `out_delta_json`, if non-null, receives the resulting delta.

 # Safety
 Non-null pointers must be valid.
 */
enum WfStatus wf_session_edit(struct WfSession *session,
                              const char *command_json,
                              char **out_delta_json);

/*
 Closes dwell on the current page at `now_ms`. A no-op when no page is current.

 # Safety
 `session` must be valid.
 */
enum WfStatus wf_session_finalize(struct WfSession *session, int64_t now_ms);

/*
 The whole map as JSON.

 # Safety
 `session` and `out` must be valid.
 */
enum WfStatus wf_session_map_json(struct WfSession *session, char **out);

/*
 Positioned layout as JSON. `options_json` may be null for defaults, or
 hold any subset of `level`, `max_depth`, `display_mode`, `node_width`,
 `node_height`, `h_gap`, `v_gap`.

 # Safety
 `session` and `out` must be valid; `options_json` null or valid.
 */
enum WfStatus wf_session_layout_json(struct WfSession *session,
                                     const char *options_json,
                                     char **out);

/*
 Graphviz rendering of the map.

 # Safety
 `session` and `out` must be valid.
 */
enum WfStatus wf_session_export_dot(struct WfSession *session, char **out);

/*
 SVG drawing of the laid-out map; options as for [`wf_session_layout_json`].

 # Safety
 `session` and `out` must be valid; `options_json` null or valid.
 */
enum WfStatus wf_session_export_svg(struct WfSession *session,
                                    const char *options_json,
                                    char **out);

/*
 Creates a cache. Times are in seconds of the caller's clock.

 # Safety
 `out` must be valid.
 */
enum WfStatus wf_cache_new(uint64_t max_residence_s,
                           uint64_t max_idle_s,
                           uint64_t capacity_bytes,
                           struct WfCache **out);

/*
 # Safety
 `cache` must come from this library and not have been freed.
 */
void wf_cache_free(struct WfCache *cache);

/*
 Stores a 200 response body for a GET of `url` at clock `now_s`.
 `out_removed`, if non-null, receives how many entries the call removed.

 # Safety
 `body` must point to `len` readable bytes (or be null with `len` 0).
 */
enum WfStatus wf_cache_insert(struct WfCache *cache,
                              const char *url,
                              const uint8_t *body,
                              size_t len,
                              uint64_t now_s,
                              size_t *out_removed);

/*
 Looks up a GET of `url` at clock `now_s`.

 # Safety
 `cache`, `url` and `out` must be valid.
 */
enum WfStatus wf_cache_lookup(struct WfCache *cache,
                              const char *url,
                              uint64_t now_s,
                              enum WfLookup *out);

/*
 Drops expired entries; `out_removed` may be null.

 # Safety
 `cache` must be valid.
 */
enum WfStatus wf_cache_sweep(struct WfCache *cache, uint64_t now_s, size_t *out_removed);

/*
 Hit, miss and size counters as JSON.

 # Safety
 `cache` and `out` must be valid.
 */
enum WfStatus wf_cache_stats_json(struct WfCache *cache, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAYFINDER_H */
