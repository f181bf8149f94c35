//! Bounded-window `<title>` extraction from streamed HTML.

use encoding_rs::{Encoding, UTF_8};

/// Bytes of decoded body inspected when looking for a title.
pub const TITLE_WINDOW: usize = 64 * 1024;
/// Titles longer than this are truncated, in characters.
pub const MAX_TITLE_CHARS: usize = 256;

/// Returns the document title found in the first [`TITLE_WINDOW`] bytes.
///
/// The charset comes from the `Content-Type` parameter, then a `<meta>`
/// declaration inside the window, then defaults to UTF-8. Invalid byte
/// sequences are replaced rather than rejected.
pub fn extract_title(body_prefix: &[u8], content_type: Option<&str>) -> Option<String> {
    let window = &body_prefix[..body_prefix.len().min(TITLE_WINDOW)];
    let encoding = content_type
        .and_then(charset_param)
        .and_then(|label| Encoding::for_label(label.as_bytes()))
        .or_else(|| sniff_meta_charset(window))
        .map(html_compatible)
        .unwrap_or(UTF_8);
    let (text, _, _) = encoding.decode(window);
    let raw = find_title_text(&text)?;
    let decoded = html_escape::decode_html_entities(raw);
    let collapsed = decoded
        .split(|c: char| c.is_ascii_whitespace())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if collapsed.is_empty() {
        return None;
    }
    Some(collapsed.chars().take(MAX_TITLE_CHARS).collect())
}

/// Accumulates the leading bytes of a body up to the title window.
#[derive(Debug, Default, Clone)]
pub struct TitleWindow {
    buf: Vec<u8>,
}

impl TitleWindow {
    pub fn push(&mut self, chunk: &[u8]) {
        let room = TITLE_WINDOW.saturating_sub(self.buf.len());
        self.buf.extend_from_slice(&chunk[..chunk.len().min(room)]);
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() >= TITLE_WINDOW
    }

    pub fn bytes(&self) -> &[u8] {
        &self.buf
    }
}

// A UTF-16 declaration inside an ASCII-compatible byte stream cannot be
// right; browsers fall back to UTF-8 in that case.
fn html_compatible(enc: &'static Encoding) -> &'static Encoding {
    if enc.is_ascii_compatible() {
        enc
    } else {
        UTF_8
    }
}

fn charset_param(content_type: &str) -> Option<String> {
    content_type.split(';').skip(1).find_map(|param| {
        let (name, value) = param.split_once('=')?;
        if name.trim().eq_ignore_ascii_case("charset") {
            let v = value.trim().trim_matches(|c| c == '"' || c == '\'');
            (!v.is_empty()).then(|| v.to_owned())
        } else {
            None
        }
    })
}

fn sniff_meta_charset(window: &[u8]) -> Option<&'static Encoding> {
    let lower: Vec<u8> = window.iter().map(u8::to_ascii_lowercase).collect();
    let mut from = 0;
    while let Some(pos) = find_bytes(&lower[from..], b"<meta") {
        let start = from + pos;
        let end = lower[start..]
            .iter()
            .position(|&b| b == b'>')
            .map_or(lower.len(), |e| start + e);
        let tag = &lower[start..end];
        if let Some(cs) = find_bytes(tag, b"charset") {
            let rest = &tag[cs + b"charset".len()..];
            let rest = trim_ascii_start(rest);
            if let Some(rest) = rest.strip_prefix(b"=") {
                let rest = trim_ascii_start(rest);
                let rest = rest
                    .strip_prefix(b"\"")
                    .or_else(|| rest.strip_prefix(b"'"))
                    .unwrap_or(rest);
                let label_end = rest
                    .iter()
                    .position(|&b| matches!(b, b'"' | b'\'' | b';' | b'/') || b.is_ascii_whitespace())
                    .unwrap_or(rest.len());
                if let Some(enc) = Encoding::for_label(&rest[..label_end]) {
                    return Some(enc);
                }
            }
        }
        from = end.max(start + 1);
        if from >= lower.len() {
            break;
        }
    }
    None
}

fn trim_ascii_start(b: &[u8]) -> &[u8] {
    let n = b.iter().take_while(|c| c.is_ascii_whitespace()).count();
    &b[n..]
}

fn find_bytes(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn find_ci(haystack: &str, from: usize, needle: &str) -> Option<usize> {
    haystack.as_bytes()[from..]
        .windows(needle.len())
        .position(|w| w.eq_ignore_ascii_case(needle.as_bytes()))
        .map(|p| from + p)
}

/// Position just past the end of the tag starting at `lt`.
fn tag_end(text: &str, lt: usize) -> usize {
    text[lt..].find('>').map_or(text.len(), |p| lt + p + 1)
}

fn tag_name_at(text: &str, lt: usize) -> Option<(bool, String)> {
    let rest = &text.as_bytes()[lt + 1..];
    let (closing, rest) = match rest.first() {
        Some(b'/') => (true, &rest[1..]),
        _ => (false, rest),
    };
    let len = rest.iter().take_while(|b| b.is_ascii_alphanumeric()).count();
    if len == 0 {
        return None;
    }
    let name = String::from_utf8_lossy(&rest[..len]).to_ascii_lowercase();
    Some((closing, name))
}

/// Scans for the first HTML-namespace `<title>` element and returns its raw text.
///
/// Comments and the contents of `script`, `style` and `svg` elements are
/// skipped so that a `<title>` inside them is not mistaken for the document's.
fn find_title_text(text: &str) -> Option<&str> {
    let mut pos = 0;
    while let Some(off) = text[pos..].find('<') {
        let lt = pos + off;
        if text[lt..].starts_with("<!--") {
            pos = text[lt + 4..].find("-->").map_or(text.len(), |p| lt + 4 + p + 3);
            continue;
        }
        let Some((closing, name)) = tag_name_at(text, lt) else {
            pos = lt + 1;
            continue;
        };
        let after = tag_end(text, lt);
        if closing {
            pos = after;
            continue;
        }
        match name.as_str() {
            "title" => {
                let close = find_ci(text, after.min(text.len()), "</title").unwrap_or(text.len());
                return Some(&text[after.min(close)..close]);
            }
            "script" | "style" | "svg" | "textarea" => {
                let closer = format!("</{name}");
                pos = find_ci(text, after.min(text.len()), &closer)
                    .map_or(text.len(), |c| tag_end(text, c));
            }
            _ => pos = after,
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn title(html: &str) -> Option<String> {
        extract_title(html.as_bytes(), Some("text/html"))
    }

    #[test]
    fn decodes_entities() {
        assert_eq!(
            title("<html><head><title>Home &amp; Start</title>").as_deref(),
            Some("Home & Start")
        );
        assert_eq!(title("<title>&#x41;&#66;&eacute;</title>").as_deref(), Some("ABé"));
    }

    #[test]
    fn collapses_whitespace() {
        assert_eq!(title("<TITLE>\n  A  \n  B </TITLE>").as_deref(), Some("A B"));
    }

    #[test]
    fn absent_title() {
        assert_eq!(title("<html><body>hi</body></html>"), None);
        assert_eq!(title(""), None);
        assert_eq!(title("<title>   </title>"), None);
    }

    #[test]
    fn ignores_title_in_comments_scripts_and_svg() {
        let html = "<!-- <title>no</title> --><script>var s='<title>x</title>';</script>\
                    <svg><title>icon</title></svg><title>yes</title>";
        assert_eq!(title(html).as_deref(), Some("yes"));
    }

    #[test]
    fn title_with_attributes() {
        assert_eq!(title("<title lang=\"en\">T</title>").as_deref(), Some("T"));
        assert_eq!(title("<titles>no</titles>"), None);
    }

    #[test]
    fn truncates_long_titles() {
        let long = "x".repeat(1000);
        let t = title(&format!("<title>{long}</title>")).unwrap();
        assert_eq!(t.chars().count(), MAX_TITLE_CHARS);
    }

    #[test]
    fn only_inspects_window() {
        let mut html = "a".repeat(TITLE_WINDOW);
        html.push_str("<title>late</title>");
        assert_eq!(title(&html), None);
    }

    #[test]
    fn unterminated_title_takes_rest_of_window() {
        assert_eq!(title("<title>partial").as_deref(), Some("partial"));
    }

    #[test]
    fn charset_from_content_type() {
        let bytes = b"<title>caf\xe9</title>";
        assert_eq!(
            extract_title(bytes, Some("text/html; charset=ISO-8859-1")).as_deref(),
            Some("café")
        );
    }

    #[test]
    fn charset_from_meta() {
        let bytes = b"<meta charset=\"windows-1252\"><title>\x93q\x94</title>";
        assert_eq!(extract_title(bytes, Some("text/html")).as_deref(), Some("\u{201c}q\u{201d}"));
        let bytes = b"<meta http-equiv=\"Content-Type\" content=\"text/html; charset=iso-8859-1\">\
                      <title>\xe9</title>";
        assert_eq!(extract_title(bytes, None).as_deref(), Some("é"));
    }

    #[test]
    fn invalid_utf8_is_replaced() {
        let bytes = b"<title>a\xffb</title>";
        assert_eq!(extract_title(bytes, Some("text/html")).as_deref(), Some("a\u{fffd}b"));
    }

    #[test]
    fn window_accumulator_is_bounded() {
        let mut w = TitleWindow::default();
        w.push(&vec![b'a'; TITLE_WINDOW - 10]);
        assert!(!w.is_full());
        w.push(&[b'b'; 100]);
        assert!(w.is_full());
        assert_eq!(w.bytes().len(), TITLE_WINDOW);
    }
}
