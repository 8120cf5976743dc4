//! Browser-free approximation of "did the payload pop an alert".
//!
//! The report is parsed with a standards-conforming, error-recovering HTML5 parser
//! and the resulting tree is searched for an element that would run the
//! payload's `alert(1)` on page load: an `onerror` handler on an element
//! whose resource load fails, an `onload` handler on an element that loads,
//! or an inline script. Anything else is unconfirmed with a reason.

use std::fmt;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use scraper::{ElementRef, Html, Node};
use serde::{Deserialize, Serialize};

use crate::payload::{Payload, MARKER};

/// Shortest payload prefix that still counts as a truncated occurrence.
pub const MIN_TRUNCATED_PREFIX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    /// Payload reached an executable position.
    Executable,
    /// Payload present only after entity decoding: markup was escaped.
    Escaped,
    /// Payload present verbatim but in a non-executable context.
    Inert,
    /// Payload present only in percent-encoded form.
    Encoded,
    /// Only a prefix of the payload is present.
    Truncated,
    Absent,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Executable => "executable",
            Reason::Escaped => "escaped",
            Reason::Inert => "inert",
            Reason::Encoded => "encoded",
            Reason::Truncated => "truncated",
            Reason::Absent => "absent",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticVerdict {
    pub confirmed: bool,
    pub reason: Reason,
    /// Serialized executable element, or the matching text for unconfirmed verdicts.
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckError {
    #[error("report is not parseable as HTML: {0}")]
    ParseFailure(String),
}

const ONERROR_HOSTS: &[&str] = &[
    "img", "image", "input", "video", "audio", "source", "script", "embed", "object", "track",
];
const ONLOAD_HOSTS: &[&str] = &["body", "svg", "iframe", "frameset", "img", "style", "link"];
const INERT_ANCESTORS: &[&str] = &["template", "noscript"];

fn decode_report(content: &[u8]) -> Result<String, CheckError> {
    if content.is_empty() {
        return Err(CheckError::ParseFailure("empty report".into()));
    }
    let content = content.strip_prefix(b"\xef\xbb\xbf").unwrap_or(content);
    let text = String::from_utf8_lossy(content);
    let total = text.chars().count().max(1);
    let junk = text
        .chars()
        .filter(|&c| c == '\u{fffd}' || (c.is_control() && !c.is_whitespace()))
        .count();
    if junk * 10 > total {
        return Err(CheckError::ParseFailure(format!(
            "{junk} of {total} characters are binary or undecodable"
        )));
    }
    Ok(text.into_owned())
}

fn in_inert_subtree(el: &ElementRef<'_>) -> bool {
    el.ancestors()
        .filter_map(ElementRef::wrap)
        .any(|a| INERT_ANCESTORS.contains(&a.value().name()))
}

/// Describes why `el` would run `alert(1)` on load, if it would.
fn executes_marker(el: &ElementRef<'_>) -> Option<String> {
    let v = el.value();
    let name = v.name();
    if name == "script" {
        let js_type = v.attr("type").is_none_or(|t| {
            let t = t.trim().to_ascii_lowercase();
            t.is_empty() || t.contains("javascript") || t == "module"
        });
        let body: String = el.text().collect();
        if js_type && v.attr("src").is_none() && body.contains(MARKER) {
            return Some(el.html());
        }
    }
    let handler = |attr: &str| v.attr(attr).is_some_and(|h| h.contains(MARKER));
    let loads = v.attr("src").or_else(|| v.attr("data")).is_some();
    if handler("onerror") && ONERROR_HOSTS.contains(&name) && loads {
        return Some(el.html());
    }
    if handler("onload") && ONLOAD_HOSTS.contains(&name) {
        return Some(el.html());
    }
    None
}

/// Text nodes and attribute values after entity decoding.
fn decoded_strings(doc: &Html) -> Vec<String> {
    let mut out = Vec::new();
    for node in doc.tree.nodes() {
        match node.value() {
            Node::Text(t) => out.push(t.text.to_string()),
            Node::Element(e) => out.extend(e.attrs().map(|(_, v)| v.to_string())),
            _ => {}
        }
    }
    out.push(doc.root_element().text().collect());
    out
}

fn encoded_forms(text: &str) -> Vec<String> {
    vec![
        text.replace(' ', "%20"),
        text.replace(' ', "+"),
        utf8_percent_encode(text, NON_ALPHANUMERIC).to_string(),
    ]
}

fn longest_prefix_in(payload: &str, hay: &[&str]) -> usize {
    let boundaries: Vec<usize> = payload
        .char_indices()
        .map(|(i, _)| i)
        .skip(1)
        .chain(std::iter::once(payload.len()))
        .collect();
    let mut best = 0;
    for (n, &end) in boundaries.iter().enumerate() {
        let prefix = &payload[..end];
        if hay.iter().any(|h| h.contains(prefix)) {
            best = n + 1;
        } else {
            break;
        }
    }
    best
}

/// Decides whether `payload` reached an executable position in `report`.
pub fn check_exploit_static(report: &[u8], payload: &Payload) -> Result<StaticVerdict, CheckError> {
    let raw = decode_report(report)?;
    let doc = Html::parse_document(&raw);

    for node in doc.tree.nodes() {
        let Some(el) = ElementRef::wrap(node) else { continue };
        if in_inert_subtree(&el) {
            continue;
        }
        if let Some(evidence) = executes_marker(&el) {
            return Ok(StaticVerdict {
                confirmed: true,
                reason: Reason::Executable,
                evidence,
            });
        }
    }

    let unconfirmed = |reason: Reason, evidence: &str| {
        Ok(StaticVerdict {
            confirmed: false,
            reason,
            evidence: evidence.to_string(),
        })
    };
    let text = payload.text.as_str();
    let decoded = decoded_strings(&doc);
    if decoded.iter().any(|d| d.contains(text)) {
        let reason = if raw.contains(text) { Reason::Inert } else { Reason::Escaped };
        return unconfirmed(reason, text);
    }
    if raw.contains(text) {
        // Verbatim but outside the tree: comments, template content, or a
        // tag the parser discarded.
        return unconfirmed(Reason::Inert, text);
    }
    let mut hay: Vec<&str> = decoded.iter().map(String::as_str).collect();
    hay.push(&raw);
    for form in encoded_forms(text) {
        if form != text && hay.iter().any(|h| h.contains(&form)) {
            return unconfirmed(Reason::Encoded, &form);
        }
    }
    let chars = longest_prefix_in(text, &hay);
    if chars >= MIN_TRUNCATED_PREFIX.min(payload.length) {
        let prefix: String = text.chars().take(chars).collect();
        return unconfirmed(Reason::Truncated, &prefix);
    }
    unconfirmed(Reason::Absent, "")
}
