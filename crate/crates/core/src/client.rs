//! Minimal blocking HTTP/1.1 GET over plain TCP, used by the mock scanners
//! and the http-api adapter. HTTPS targets go through an external proxy.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use url::Url;

const MAX_RESPONSE_BYTES: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub reason: String,
    /// Header name/value pairs in wire order, values decoded as lossy UTF-8.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    /// First header named `name`, case-insensitively.
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("bad url {0}: {1}")]
    BadUrl(String, String),
    #[error("cannot reach {0}: {1}")]
    Unreachable(String, #[source] io::Error),
    #[error("malformed response from {0}: {1}")]
    Malformed(String, String),
}

pub fn get(target: &str, timeout: Duration) -> Result<HttpResponse, ClientError> {
    let url = Url::parse(target).map_err(|e| ClientError::BadUrl(target.into(), e.to_string()))?;
    if url.scheme() != "http" {
        return Err(ClientError::BadUrl(target.into(), "only http:// is supported".into()));
    }
    let host = url
        .host_str()
        .ok_or_else(|| ClientError::BadUrl(target.into(), "missing host".into()))?;
    let port = url.port_or_known_default().unwrap_or(80);
    let unreachable = |e| ClientError::Unreachable(target.to_string(), e);

    let addr = (host.trim_start_matches('[').trim_end_matches(']'), port)
        .to_socket_addrs()
        .map_err(unreachable)?
        .next()
        .ok_or_else(|| unreachable(io::Error::new(io::ErrorKind::NotFound, "no address")))?;
    let mut stream = TcpStream::connect_timeout(&addr, timeout).map_err(unreachable)?;
    stream.set_read_timeout(Some(timeout)).map_err(unreachable)?;
    stream.set_write_timeout(Some(timeout)).map_err(unreachable)?;

    let mut path = url.path().to_string();
    if let Some(q) = url.query() {
        path.push('?');
        path.push_str(q);
    }
    let host_header = match url.port() {
        Some(p) => format!("{host}:{p}"),
        None => host.to_string(),
    };
    let request = format!(
        "GET {path} HTTP/1.1\r\nHost: {host_header}\r\nUser-Agent: revstrike\r\nAccept: */*\r\nConnection: close\r\n\r\n"
    );
    stream.write_all(request.as_bytes()).map_err(unreachable)?;

    let mut raw = Vec::new();
    stream
        .take(MAX_RESPONSE_BYTES as u64)
        .read_to_end(&mut raw)
        .map_err(unreachable)?;
    parse_response(&raw).map_err(|m| ClientError::Malformed(target.to_string(), m))
}

/// Parses a complete `Connection: close` response.
pub fn parse_response(raw: &[u8]) -> Result<HttpResponse, String> {
    let mut headers = [httparse::EMPTY_HEADER; 128];
    let mut resp = httparse::Response::new(&mut headers);
    let head_len = match resp.parse(raw) {
        Ok(httparse::Status::Complete(n)) => n,
        Ok(httparse::Status::Partial) => return Err("truncated head".into()),
        Err(e) => return Err(e.to_string()),
    };
    let headers: Vec<(String, String)> = resp
        .headers
        .iter()
        .map(|h| (h.name.to_string(), String::from_utf8_lossy(h.value).into_owned()))
        .collect();
    let mut body = raw[head_len..].to_vec();
    let declared = headers
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.trim().parse::<usize>().ok());
    if let Some(n) = declared {
        if body.len() < n {
            return Err(format!("body shorter than Content-Length {n}"));
        }
        body.truncate(n);
    }
    Ok(HttpResponse {
        status: resp.code.unwrap_or_default(),
        reason: raw_reason(raw),
        headers,
        body,
    })
}

/// Reason phrase straight from the status line; httparse drops phrases
/// containing non-ASCII bytes.
fn raw_reason(raw: &[u8]) -> String {
    let line_end = raw.windows(2).position(|w| w == b"\r\n").unwrap_or(raw.len());
    let line = &raw[..line_end];
    let reason = line.splitn(3, |&b| b == b' ').nth(2).unwrap_or_default();
    String::from_utf8_lossy(reason).into_owned()
}
