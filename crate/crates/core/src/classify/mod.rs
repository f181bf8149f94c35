//! Decides which proxied transactions are page navigations.
//!
//! The rule is header-level only: a successful GET or POST whose response is
//! an HTML document, requested by a client that accepts HTML. Redirect hops
//! are logged as transactions but never classify as pages; only the final
//! 200 does.

mod title;
mod url;

pub use self::title::{extract_title, TitleWindow, MAX_TITLE_CHARS, TITLE_WINDOW};
pub use self::url::{normalize_url, CanonicalUrl};

use crate::proxy::{HttpTransaction, TransactionKind};

const PAGE_STATUSES: [u16; 3] = [200, 203, 206];
const PAGE_MEDIA_TYPES: [&str; 2] = ["text/html", "application/xhtml+xml"];

/// Lowercased media type of a `Content-Type` value, without parameters.
pub fn media_type(content_type: &str) -> String {
    content_type
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase()
}

pub fn is_html(content_type: Option<&str>) -> bool {
    content_type.is_some_and(|ct| PAGE_MEDIA_TYPES.contains(&media_type(ct).as_str()))
}

fn accepts_html(accept: &str) -> bool {
    accept.split(',').any(|range| {
        let mt = media_type(range);
        mt == "text/html" || mt == "*/*"
    })
}

pub fn is_page_navigation(txn: &HttpTransaction) -> bool {
    if txn.kind != TransactionKind::Plain {
        return false;
    }
    if txn.method != "GET" && txn.method != "POST" {
        return false;
    }
    if !txn.status.is_some_and(|s| PAGE_STATUSES.contains(&s)) {
        return false;
    }
    if !is_html(txn.content_type.as_deref()) {
        return false;
    }
    txn.accept.as_deref().is_none_or(accepts_html)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn txn(method: &str, status: u16, ct: Option<&str>, accept: Option<&str>) -> HttpTransaction {
        HttpTransaction {
            id: 1,
            started_at: 0,
            method: method.into(),
            url: "http://a.test/".into(),
            referer: None,
            accept: accept.map(Into::into),
            status: Some(status),
            content_type: ct.map(Into::into),
            body_bytes: 0,
            served_from_cache: false,
            kind: TransactionKind::Plain,
            since_last_ms: None,
        }
    }

    #[test]
    fn html_get_is_page() {
        assert!(is_page_navigation(&txn("GET", 200, Some("text/html"), Some("text/html"))));
        assert!(is_page_navigation(&txn(
            "GET",
            200,
            Some("text/html; charset=utf-8"),
            Some("text/html,application/xhtml+xml;q=0.9,*/*;q=0.8")
        )));
        assert!(is_page_navigation(&txn("POST", 200, Some("application/xhtml+xml"), None)));
        assert!(is_page_navigation(&txn("GET", 206, Some("TEXT/HTML"), Some("*/*"))));
    }

    #[test]
    fn subresources_are_not_pages() {
        assert!(!is_page_navigation(&txn("GET", 200, Some("text/css"), None)));
        assert!(!is_page_navigation(&txn("GET", 200, Some("image/png"), None)));
        assert!(!is_page_navigation(&txn("GET", 200, None, None)));
        assert!(!is_page_navigation(&txn("GET", 200, Some("text/html"), Some("image/webp,image/*"))));
    }

    #[test]
    fn failures_and_redirects_are_not_pages() {
        assert!(!is_page_navigation(&txn("GET", 404, Some("text/html"), None)));
        assert!(!is_page_navigation(&txn("GET", 302, Some("text/html"), None)));
        assert!(!is_page_navigation(&txn("GET", 502, Some("text/html"), None)));
    }

    #[test]
    fn other_methods_and_tunnels_are_not_pages() {
        assert!(!is_page_navigation(&txn("HEAD", 200, Some("text/html"), None)));
        assert!(!is_page_navigation(&txn("PUT", 200, Some("text/html"), None)));
        let mut t = txn("CONNECT", 200, None, None);
        t.kind = TransactionKind::Tunnel;
        t.status = None;
        assert!(!is_page_navigation(&t));
    }
}
