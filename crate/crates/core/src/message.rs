//! Instantiated HTTP/1.1 responses and their wire rendering.

use serde::{Deserialize, Serialize};

/// A response with every placeholder bound. Header lines are kept verbatim
/// (`Name: value`) as the grammar produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpMessage {
    pub status_line: String,
    pub headers: Vec<String>,
    #[serde(with = "body_text")]
    pub body: Vec<u8>,
}

impl HttpMessage {
    /// `(name, value)` pairs with optional whitespace around the value trimmed.
    pub fn header_fields(&self) -> impl Iterator<Item = (&str, &str)> {
        self.headers.iter().map(|line| match line.split_once(':') {
            Some((name, value)) => (name, value.trim_matches([' ', '\t'])),
            None => (line.as_str(), ""),
        })
    }

    fn has_header(&self, name: &str) -> bool {
        self.header_fields().any(|(n, _)| n.eq_ignore_ascii_case(name))
    }

    /// Replaces every occurrence of `needle` in status line, headers and body.
    pub fn substitute(&self, needle: &str, replacement: &str) -> HttpMessage {
        HttpMessage {
            status_line: self.status_line.replace(needle, replacement),
            headers: self.headers.iter().map(|h| h.replace(needle, replacement)).collect(),
            body: replace_bytes(&self.body, needle.as_bytes(), replacement.as_bytes()),
        }
    }

    /// Serialized head: status line, headers, framing headers, blank line.
    fn head(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(128 + self.headers.iter().map(String::len).sum::<usize>());
        out.extend_from_slice(self.status_line.as_bytes());
        out.extend_from_slice(b"\r\n");
        for h in &self.headers {
            out.extend_from_slice(h.as_bytes());
            out.extend_from_slice(b"\r\n");
        }
        if !self.has_header("Content-Length") {
            out.extend_from_slice(format!("Content-Length: {}\r\n", self.body.len()).as_bytes());
        }
        if !self.has_header("Connection") {
            out.extend_from_slice(b"Connection: close\r\n");
        }
        out.extend_from_slice(b"\r\n");
        out
    }
}

/// Wire form: CRLF-terminated status and header lines, a `Content-Length`
/// and `Connection: close` unless already present, a blank line, the body.
pub fn render_http(msg: &HttpMessage) -> Vec<u8> {
    let mut out = msg.head();
    out.extend_from_slice(&msg.body);
    out
}

/// Response to a HEAD request: identical head, body bytes suppressed.
pub fn render_head(msg: &HttpMessage) -> Vec<u8> {
    msg.head()
}

pub(crate) fn replace_bytes(haystack: &[u8], needle: &[u8], replacement: &[u8]) -> Vec<u8> {
    if needle.is_empty() {
        return haystack.to_vec();
    }
    let mut out = Vec::with_capacity(haystack.len());
    let mut i = 0;
    while i < haystack.len() {
        if haystack[i..].starts_with(needle) {
            out.extend_from_slice(replacement);
            i += needle.len();
        } else {
            out.push(haystack[i]);
            i += 1;
        }
    }
    out
}

pub(crate) fn find_all(haystack: &[u8], needle: &[u8]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return Vec::new();
    }
    haystack
        .windows(needle.len())
        .enumerate()
        .filter_map(|(i, w)| (w == needle).then_some(i))
        .collect()
}

/// Bodies are stored as text when they are UTF-8, hex otherwise.
mod body_text {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Text(String),
        Hex { hex: String },
    }

    pub fn serialize<S: Serializer>(body: &[u8], s: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(body) {
            Ok(t) => Repr::Text(t.to_string()),
            Err(_) => Repr::Hex { hex: hex::encode(body) },
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Text(t) => Ok(t.into_bytes()),
            Repr::Hex { hex } => hex::decode(hex).map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nginx(body: &[u8]) -> HttpMessage {
        HttpMessage {
            status_line: "HTTP/1.1 200 OK".into(),
            headers: vec!["Server: nginx/1.17.0".into()],
            body: body.to_vec(),
        }
    }

    #[test]
    fn minimal_response_bytes() {
        assert_eq!(
            render_http(&nginx(b"")),
            b"HTTP/1.1 200 OK\r\nServer: nginx/1.17.0\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
        );
    }

    #[test]
    fn content_length_counts_body_bytes() {
        let wire = render_http(&nginx(b"hello"));
        let text = String::from_utf8(wire).unwrap();
        assert!(text.contains("\r\nContent-Length: 5\r\n"));
        assert!(text.ends_with("\r\n\r\nhello"));
    }

    #[test]
    fn existing_framing_headers_are_kept() {
        let mut m = nginx(b"abc");
        m.headers.push("content-length: 3".into());
        m.headers.push("Connection: keep-alive".into());
        let text = String::from_utf8(render_http(&m)).unwrap();
        assert_eq!(text.matches("ength:").count(), 1);
        assert!(!text.contains("close"));
    }

    #[test]
    fn head_keeps_length_of_suppressed_body() {
        let m = nginx(b"12345678");
        let head = render_head(&m);
        assert!(String::from_utf8(head.clone()).unwrap().contains("Content-Length: 8"));
        assert!(head.ends_with(b"\r\n\r\n"));
        assert_eq!(&render_http(&m)[..head.len()], &head[..]);
    }

    #[test]
    fn substitute_hits_every_part() {
        let m = HttpMessage {
            status_line: "HTTP/1.0 200 TOK".into(),
            headers: vec!["X-Varnish: TOK".into()],
            body: b"TOK".to_vec(),
        };
        let s = m.substitute("TOK", "<p>");
        assert_eq!(s.status_line, "HTTP/1.0 200 <p>");
        assert_eq!(s.headers[0], "X-Varnish: <p>");
        assert_eq!(s.body, b"<p>");
    }

    #[test]
    fn body_serde_falls_back_to_hex() {
        let mut m = nginx(&[0xff, 0x00]);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"hex\":\"ff00\""));
        assert_eq!(serde_json::from_str::<HttpMessage>(&json).unwrap(), m);
        m.body = b"plain".to_vec();
        assert!(serde_json::to_string(&m).unwrap().contains("\"body\":\"plain\""));
    }
}
