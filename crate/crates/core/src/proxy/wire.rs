//! HTTP/1.1 message framing over async byte streams.

use std::io;

use bytes::Bytes;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use super::RequestHead;

/// Header list in wire order, names with their original case.
pub type Headers = Vec<(String, String)>;

pub const MAX_HEAD_BYTES: usize = 64 * 1024;
const MAX_HEADERS: usize = 128;
const MAX_CHUNK_LINE: usize = 4096;
const READ_SIZE: usize = 16 * 1024;

pub fn header<'a>(headers: &'a Headers, name: &str) -> Option<&'a str> {
    headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| v.as_str())
}

pub fn has_token(headers: &Headers, name: &str, token: &str) -> bool {
    headers
        .iter()
        .filter(|(k, _)| k.eq_ignore_ascii_case(name))
        .flat_map(|(_, v)| v.split(','))
        .any(|t| t.trim().eq_ignore_ascii_case(token))
}

#[derive(Debug)]
pub enum HeadError {
    Io(io::Error),
    Malformed(String),
    /// The peer closed the connection part-way through a head.
    Truncated,
}

impl From<io::Error> for HeadError {
    fn from(e: io::Error) -> Self {
        HeadError::Io(e)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseHead {
    pub status: u16,
    pub reason: String,
    pub minor_version: u8,
    pub headers: Headers,
}

/// How a message body is delimited on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BodyFraming {
    Empty,
    Fixed(u64),
    Chunked,
    UntilClose,
}

fn content_length(headers: &Headers) -> Result<Option<u64>, String> {
    let mut found: Option<u64> = None;
    for (_, v) in headers.iter().filter(|(k, _)| k.eq_ignore_ascii_case("content-length")) {
        for part in v.split(',') {
            let n: u64 = part.trim().parse().map_err(|_| format!("bad Content-Length {v:?}"))?;
            if found.is_some_and(|f| f != n) {
                return Err("conflicting Content-Length values".into());
            }
            found = Some(n);
        }
    }
    Ok(found)
}

fn is_chunked(headers: &Headers) -> bool {
    headers
        .iter()
        .filter(|(k, _)| k.eq_ignore_ascii_case("transfer-encoding"))
        .flat_map(|(_, v)| v.split(','))
        .last()
        .is_some_and(|t| t.trim().eq_ignore_ascii_case("chunked"))
}

pub fn request_framing(headers: &Headers) -> Result<BodyFraming, String> {
    if is_chunked(headers) {
        return Ok(BodyFraming::Chunked);
    }
    if header(headers, "transfer-encoding").is_some() {
        return Err("unsupported Transfer-Encoding on request".into());
    }
    Ok(match content_length(headers)? {
        Some(0) | None => BodyFraming::Empty,
        Some(n) => BodyFraming::Fixed(n),
    })
}

pub fn response_framing(request_method: &str, status: u16, headers: &Headers) -> Result<BodyFraming, String> {
    if request_method == "HEAD" || (100..200).contains(&status) || status == 204 || status == 304 {
        return Ok(BodyFraming::Empty);
    }
    if is_chunked(headers) {
        return Ok(BodyFraming::Chunked);
    }
    Ok(match content_length(headers)? {
        Some(0) => BodyFraming::Empty,
        Some(n) => BodyFraming::Fixed(n),
        None => BodyFraming::UntilClose,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ChunkState {
    Size,
    Data(u64),
    DataEnd,
    Trailers,
}

/// Incremental decoder for one message body.
#[derive(Debug)]
pub struct BodyReader {
    framing: BodyFraming,
    remaining: u64,
    chunk: ChunkState,
    done: bool,
}

impl BodyReader {
    pub fn new(framing: BodyFraming) -> Self {
        Self {
            framing,
            remaining: match framing {
                BodyFraming::Fixed(n) => n,
                _ => 0,
            },
            chunk: ChunkState::Size,
            done: matches!(framing, BodyFraming::Empty),
        }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }
}

/// A byte stream with a read-ahead buffer shared by head and body parsing.
pub struct HttpConn<S> {
    io: S,
    buf: Vec<u8>,
}

impl<S: AsyncRead + AsyncWrite + Unpin> HttpConn<S> {
    pub fn new(io: S) -> Self {
        Self { io, buf: Vec::with_capacity(READ_SIZE) }
    }

    pub fn get_mut(&mut self) -> &mut S {
        &mut self.io
    }

    /// The stream and any bytes already read past the last parsed message.
    pub fn into_parts(self) -> (S, Vec<u8>) {
        (self.io, self.buf)
    }

    async fn fill(&mut self) -> io::Result<usize> {
        let start = self.buf.len();
        self.buf.resize(start + READ_SIZE, 0);
        let n = self.io.read(&mut self.buf[start..]).await;
        self.buf.truncate(start + *n.as_ref().unwrap_or(&0));
        n
    }

    /// Next request head, or `None` when the peer closed between requests.
    pub async fn read_request_head(&mut self) -> Result<Option<RequestHead>, HeadError> {
        loop {
            // Tolerate stray CRLFs between pipelined requests.
            let skip = self.buf.iter().take_while(|b| **b == b'\r' || **b == b'\n').count();
            self.buf.drain(..skip);
            if !self.buf.is_empty() {
                let mut headers = [httparse::EMPTY_HEADER; MAX_HEADERS];
                let mut req = httparse::Request::new(&mut headers);
                match req.parse(&self.buf) {
                    Ok(httparse::Status::Complete(len)) => {
                        let head = RequestHead {
                            method: req.method.unwrap_or_default().to_owned(),
                            target: req.path.unwrap_or_default().to_owned(),
                            minor_version: req.version.unwrap_or(1),
                            headers: collect_headers(req.headers),
                        };
                        self.buf.drain(..len);
                        return Ok(Some(head));
                    }
                    Ok(httparse::Status::Partial) => {}
                    Err(e) => return Err(HeadError::Malformed(e.to_string())),
                }
                if self.buf.len() > MAX_HEAD_BYTES {
                    return Err(HeadError::Malformed("request head too large".into()));
                }
            }
            let had = !self.buf.is_empty();
            if self.fill().await? == 0 {
                return if had { Err(HeadError::Truncated) } else { Ok(None) };
            }
        }
    }

    /// Next final response head; interim 1xx responses other than 101 are skipped.
    pub async fn read_response_head(&mut self) -> Result<ResponseHead, HeadError> {
        loop {
            let head = self.read_one_response_head().await?;
            if (100..200).contains(&head.status) && head.status != 101 {
                continue;
            }
            return Ok(head);
        }
    }

    async fn read_one_response_head(&mut self) -> Result<ResponseHead, HeadError> {
        loop {
            if !self.buf.is_empty() {
                let mut headers = [httparse::EMPTY_HEADER; MAX_HEADERS];
                let mut resp = httparse::Response::new(&mut headers);
                match resp.parse(&self.buf) {
                    Ok(httparse::Status::Complete(len)) => {
                        let head = ResponseHead {
                            status: resp.code.unwrap_or(0),
                            reason: resp.reason.unwrap_or_default().to_owned(),
                            minor_version: resp.version.unwrap_or(1),
                            headers: collect_headers(resp.headers),
                        };
                        self.buf.drain(..len);
                        if !(100..=599).contains(&head.status) {
                            return Err(HeadError::Malformed(format!("status {}", head.status)));
                        }
                        return Ok(head);
                    }
                    Ok(httparse::Status::Partial) => {}
                    Err(e) => return Err(HeadError::Malformed(e.to_string())),
                }
                if self.buf.len() > MAX_HEAD_BYTES {
                    return Err(HeadError::Malformed("response head too large".into()));
                }
            }
            if self.fill().await? == 0 {
                return Err(HeadError::Truncated);
            }
        }
    }

    fn take(&mut self, max: u64) -> Bytes {
        let n = (self.buf.len() as u64).min(max) as usize;
        Bytes::from(self.buf.drain(..n).collect::<Vec<u8>>())
    }

    async fn ensure_data(&mut self) -> io::Result<()> {
        if self.buf.is_empty() && self.fill().await? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "body ended early"));
        }
        Ok(())
    }

    async fn read_line(&mut self) -> io::Result<Vec<u8>> {
        loop {
            if let Some(pos) = self.buf.iter().position(|&b| b == b'\n') {
                let mut line: Vec<u8> = self.buf.drain(..=pos).collect();
                line.pop();
                if line.last() == Some(&b'\r') {
                    line.pop();
                }
                return Ok(line);
            }
            if self.buf.len() > MAX_CHUNK_LINE {
                return Err(io::Error::new(io::ErrorKind::InvalidData, "chunk line too long"));
            }
            self.ensure_data_more().await?;
        }
    }

    async fn ensure_data_more(&mut self) -> io::Result<()> {
        if self.fill().await? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "body ended early"));
        }
        Ok(())
    }

    /// Next piece of decoded body, or `None` at the end of the body.
    pub async fn read_body_chunk(&mut self, reader: &mut BodyReader) -> io::Result<Option<Bytes>> {
        if reader.done {
            return Ok(None);
        }
        match reader.framing {
            BodyFraming::Empty => {
                reader.done = true;
                Ok(None)
            }
            BodyFraming::Fixed(_) => {
                if reader.remaining == 0 {
                    reader.done = true;
                    return Ok(None);
                }
                self.ensure_data().await?;
                let chunk = self.take(reader.remaining);
                reader.remaining -= chunk.len() as u64;
                if reader.remaining == 0 {
                    reader.done = true;
                }
                Ok(Some(chunk))
            }
            BodyFraming::UntilClose => {
                if self.buf.is_empty() && self.fill().await? == 0 {
                    reader.done = true;
                    return Ok(None);
                }
                Ok(Some(self.take(u64::MAX)))
            }
            BodyFraming::Chunked => loop {
                match reader.chunk {
                    ChunkState::Size => {
                        let line = self.read_line().await?;
                        let text = String::from_utf8_lossy(&line);
                        let size_str = text.split(';').next().unwrap_or("").trim();
                        let size = u64::from_str_radix(size_str, 16).map_err(|_| {
                            io::Error::new(io::ErrorKind::InvalidData, format!("bad chunk size {size_str:?}"))
                        })?;
                        reader.chunk = if size == 0 { ChunkState::Trailers } else { ChunkState::Data(size) };
                    }
                    ChunkState::Data(left) => {
                        self.ensure_data().await?;
                        let chunk = self.take(left);
                        let left = left - chunk.len() as u64;
                        reader.chunk = if left == 0 { ChunkState::DataEnd } else { ChunkState::Data(left) };
                        return Ok(Some(chunk));
                    }
                    ChunkState::DataEnd => {
                        let line = self.read_line().await?;
                        if !line.is_empty() {
                            return Err(io::Error::new(io::ErrorKind::InvalidData, "missing CRLF after chunk"));
                        }
                        reader.chunk = ChunkState::Size;
                    }
                    ChunkState::Trailers => {
                        // Trailer fields are dropped; the re-framed body carries none.
                        if self.read_line().await?.is_empty() {
                            reader.done = true;
                            return Ok(None);
                        }
                    }
                }
            },
        }
    }

    /// Reads and discards the rest of a body.
    pub async fn drain_body(&mut self, reader: &mut BodyReader) -> io::Result<u64> {
        let mut total = 0;
        while let Some(chunk) = self.read_body_chunk(reader).await? {
            total += chunk.len() as u64;
        }
        Ok(total)
    }
}

fn collect_headers(raw: &[httparse::Header<'_>]) -> Headers {
    raw.iter()
        .map(|h| (h.name.to_owned(), String::from_utf8_lossy(h.value).into_owned()))
        .collect()
}

/// Serializes a start line and header block.
pub fn encode_head(start_line: &str, headers: &Headers) -> Vec<u8> {
    let mut out = Vec::with_capacity(256);
    out.extend_from_slice(start_line.as_bytes());
    out.extend_from_slice(b"\r\n");
    for (k, v) in headers {
        out.extend_from_slice(k.as_bytes());
        out.extend_from_slice(b": ");
        out.extend_from_slice(v.as_bytes());
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(b"\r\n");
    out
}

/// Body encoding used on an outgoing message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutFraming {
    /// Length announced up front (or no body at all).
    Raw,
    Chunked,
}

pub async fn write_body_chunk<W: AsyncWrite + Unpin>(w: &mut W, framing: OutFraming, data: &[u8]) -> io::Result<()> {
    if data.is_empty() {
        return Ok(());
    }
    match framing {
        OutFraming::Raw => w.write_all(data).await,
        OutFraming::Chunked => {
            w.write_all(format!("{:x}\r\n", data.len()).as_bytes()).await?;
            w.write_all(data).await?;
            w.write_all(b"\r\n").await
        }
    }
}

pub async fn finish_body<W: AsyncWrite + Unpin>(w: &mut W, framing: OutFraming) -> io::Result<()> {
    if framing == OutFraming::Chunked {
        w.write_all(b"0\r\n\r\n").await?;
    }
    w.flush().await
}

pub fn reason_phrase(status: u16) -> &'static str {
    match status {
        200 => "OK",
        304 => "Not Modified",
        400 => "Bad Request",
        404 => "Not Found",
        501 => "Not Implemented",
        502 => "Bad Gateway",
        504 => "Gateway Timeout",
        _ => "",
    }
}
