use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use url::Url;

use crate::error::{Error, Result};

/// Absolute URL in canonical form; the identity of a page node.
///
/// Scheme and host are lowercase (IDNA hosts in punycode), default ports are
/// dropped, dot segments are resolved, percent escapes in the path are
/// normalized and the fragment is discarded. The query is kept as-is.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalUrl {
    scheme: String,
    host: String,
    port: Option<u16>,
    path: String,
    query: Option<String>,
}

impl CanonicalUrl {
    pub fn parse(raw: &str) -> Result<Self> {
        let first = Self::parse_once(raw)?;
        // Decoding escapes can expose characters the URL parser treats
        // specially, so settle on a fixed point.
        let rendered = first.to_string();
        let second = Self::parse_once(&rendered)?;
        if second == first {
            Ok(first)
        } else {
            Ok(second)
        }
    }

    fn parse_once(raw: &str) -> Result<Self> {
        let url = Url::parse(raw.trim()).map_err(|e| Error::invalid_url(raw, e))?;
        let host = match url.host_str() {
            Some(h) if !h.is_empty() => h.to_owned(),
            _ => return Err(Error::invalid_url(raw, "no host")),
        };
        let path = normalize_path_escapes(url.path());
        Ok(Self {
            scheme: url.scheme().to_owned(),
            host,
            port: url.port(),
            path: if path.is_empty() { "/".to_owned() } else { path },
            query: url.query().map(str::to_owned),
        })
    }

    /// Root URL of an HTTPS origin reached through a CONNECT tunnel.
    pub fn tunnel(host: &str, port: u16) -> Result<Self> {
        let raw = if port == 443 {
            format!("https://{host}/")
        } else {
            format!("https://{host}:{port}/")
        };
        Self::parse(&raw)
    }

    pub fn scheme(&self) -> &str {
        &self.scheme
    }

    pub fn host(&self) -> &str {
        &self.host
    }

    pub fn port(&self) -> Option<u16> {
        self.port
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn query(&self) -> Option<&str> {
        self.query.as_deref()
    }

    /// Same scheme, host and port with path `/` and no query.
    pub fn origin_root(&self) -> CanonicalUrl {
        CanonicalUrl {
            scheme: self.scheme.clone(),
            host: self.host.clone(),
            port: self.port,
            path: "/".to_owned(),
            query: None,
        }
    }

    /// Port used to reach the origin, falling back to the scheme default.
    pub fn effective_port(&self) -> u16 {
        self.port.unwrap_or(match self.scheme.as_str() {
            "https" | "wss" => 443,
            "ftp" => 21,
            _ => 80,
        })
    }

    /// Path plus query, as sent in an origin-form request line.
    pub fn request_target(&self) -> String {
        match &self.query {
            Some(q) => format!("{}?{}", self.path, q),
            None => self.path.clone(),
        }
    }
}

impl fmt::Display for CanonicalUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}://{}", self.scheme, self.host)?;
        if let Some(port) = self.port {
            write!(f, ":{port}")?;
        }
        f.write_str(&self.path)?;
        if let Some(q) = &self.query {
            write!(f, "?{q}")?;
        }
        Ok(())
    }
}

impl FromStr for CanonicalUrl {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl Serialize for CanonicalUrl {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CanonicalUrl {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        CanonicalUrl::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// Free function form of [`CanonicalUrl::parse`].
pub fn normalize_url(raw: &str) -> Result<CanonicalUrl> {
    CanonicalUrl::parse(raw)
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~')
}

/// Decodes escapes of unreserved characters and uppercases the rest.
fn normalize_path_escapes(path: &str) -> String {
    let bytes = path.as_bytes();
    let mut out = String::with_capacity(path.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            let hex = &path[i + 1..i + 3];
            if let Ok(v) = u8::from_str_radix(hex, 16) {
                if hex.bytes().all(|b| b.is_ascii_hexdigit()) {
                    if is_unreserved(v) {
                        out.push(v as char);
                    } else {
                        out.push('%');
                        out.push_str(&hex.to_ascii_uppercase());
                    }
                    i += 3;
                    continue;
                }
            }
        }
        // Non-ASCII never appears here: the URL parser has already escaped it.
        out.push(bytes[i] as char);
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn canon(raw: &str) -> String {
        CanonicalUrl::parse(raw).unwrap().to_string()
    }

    #[test]
    fn normalizes_case_port_and_dots() {
        assert_eq!(canon("HTTP://Example.COM:80/a/../b"), "http://example.com/b");
    }

    #[test]
    fn keeps_query_verbatim() {
        assert_eq!(canon("http://a.test/p?q=1"), "http://a.test/p?q=1");
        assert_eq!(canon("http://a.test/p?b=2&a=1"), "http://a.test/p?b=2&a=1");
    }

    #[test]
    fn empty_path_becomes_slash() {
        assert_eq!(canon("http://a.test"), "http://a.test/");
    }

    #[test]
    fn drops_fragment_and_userinfo() {
        assert_eq!(canon("http://u:p@a.test/x#frag"), "http://a.test/x");
    }

    #[test]
    fn non_default_port_kept() {
        assert_eq!(canon("http://a.test:8080/"), "http://a.test:8080/");
        assert_eq!(canon("https://a.test:443/"), "https://a.test/");
    }

    #[test]
    fn percent_escapes_normalized() {
        assert_eq!(canon("http://a.test/%7euser/%2f"), "http://a.test/~user/%2F");
        assert_eq!(canon("http://a.test/%41%42"), "http://a.test/AB");
    }

    #[test]
    fn idna_host_to_punycode() {
        assert_eq!(canon("http://BÜCHER.example/"), "http://xn--bcher-kva.example/");
    }

    #[test]
    fn rejects_relative_and_hostless() {
        assert!(CanonicalUrl::parse("/relative").is_err());
        assert!(CanonicalUrl::parse("mailto:x@y.z").is_err());
        assert!(CanonicalUrl::parse("not a url").is_err());
    }

    #[test]
    fn tunnel_urls() {
        assert_eq!(CanonicalUrl::tunnel("B.test", 443).unwrap().to_string(), "https://b.test/");
        assert_eq!(
            CanonicalUrl::tunnel("b.test", 8443).unwrap().to_string(),
            "https://b.test:8443/"
        );
    }

    #[test]
    fn serde_is_a_string() {
        let u = CanonicalUrl::parse("http://a.test/x?y").unwrap();
        let json = serde_json::to_string(&u).unwrap();
        assert_eq!(json, "\"http://a.test/x?y\"");
        let back: CanonicalUrl = serde_json::from_str(&json).unwrap();
        assert_eq!(back, u);
    }

    fn url_strategy() -> impl Strategy<Value = String> {
        let scheme = prop::sample::select(vec!["http", "HTTP", "https", "HttpS"]);
        let host = "[a-zA-Z][a-zA-Z0-9-]{0,8}(\\.[a-zA-Z]{2,4}){1,2}";
        let port = prop::option::of(prop::sample::select(vec![80u16, 443, 8080, 3000]));
        let seg = prop::sample::select(vec![
            "a", "B", "..", ".", "%7e", "%2f", "%41", "x y", "caf\u{e9}", "%zz", "", "~t",
        ]);
        let path = prop::collection::vec(seg, 0..5);
        let query = prop::option::of("[a-z0-9=&%]{0,8}");
        let frag = prop::option::of("[a-z]{0,4}");
        (scheme, host, port, path, query, frag).prop_map(|(s, h, p, path, q, f)| {
            let mut u = format!("{s}://{h}");
            if let Some(p) = p {
                u.push_str(&format!(":{p}"));
            }
            for seg in path {
                u.push('/');
                u.push_str(seg);
            }
            if let Some(q) = q {
                u.push('?');
                u.push_str(&q);
            }
            if let Some(f) = f {
                u.push('#');
                u.push_str(&f);
            }
            u
        })
    }

    proptest! {
        #[test]
        fn idempotent(raw in url_strategy()) {
            let once = CanonicalUrl::parse(&raw).unwrap();
            let twice = CanonicalUrl::parse(&once.to_string()).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.to_string(), twice.to_string());
        }

        #[test]
        fn fragment_case_and_default_port_insensitive(raw in url_strategy(), frag in "[a-z]{1,5}") {
            let base = CanonicalUrl::parse(&raw).unwrap();
            let with_frag = CanonicalUrl::parse(&format!("{}#{}", base, frag)).unwrap();
            prop_assert_eq!(&base, &with_frag);

            let upper_host = format!(
                "{}://{}{}{}",
                base.scheme(),
                base.host().to_ascii_uppercase(),
                base.port().map(|p| format!(":{p}")).unwrap_or_default(),
                base.request_target()
            );
            prop_assert_eq!(&base, &CanonicalUrl::parse(&upper_host).unwrap());

            if base.port().is_none() {
                let explicit = format!(
                    "{}://{}:{}{}",
                    base.scheme(),
                    base.host(),
                    base.effective_port(),
                    base.request_target()
                );
                prop_assert_eq!(&base, &CanonicalUrl::parse(&explicit).unwrap());
            }
        }
    }
}
