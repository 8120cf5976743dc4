//! Mock scanning systems with a known taint topology.
//!
//! A mock fetches the target once, copies selected response fields into an
//! HTML report through a per-field sanitizer, and writes the report. The
//! spec file also declares the (T, V) outcome a correct pipeline must
//! produce against it.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::client::{self, ClientError, HttpResponse};
use crate::field::FieldId;
use crate::ledger::ReportArtifact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Sanitizer {
    None,
    HtmlEscape,
    /// Percent-encodes ASCII whitespace and control characters only.
    UrlEncode,
    /// Values longer than N characters keep their first N-3 plus "...".
    Truncate(usize),
}

impl Sanitizer {
    pub fn apply(self, value: &str) -> String {
        match self {
            Sanitizer::None => value.to_string(),
            Sanitizer::HtmlEscape => html_escape(value),
            Sanitizer::UrlEncode => {
                let mut out = String::with_capacity(value.len());
                for c in value.chars() {
                    if c.is_ascii_whitespace() || c.is_ascii_control() {
                        out.push_str(percent_encoding::percent_encode_byte(c as u8));
                    } else {
                        out.push(c);
                    }
                }
                out
            }
            Sanitizer::Truncate(n) => {
                if value.chars().count() <= n {
                    value.to_string()
                } else {
                    let keep = n.saturating_sub(3);
                    let mut out: String = value.chars().take(keep).collect();
                    out.push_str(&"..."[..n.min(3)]);
                    out
                }
            }
        }
    }
}

impl fmt::Display for Sanitizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sanitizer::None => f.write_str("none"),
            Sanitizer::HtmlEscape => f.write_str("html-escape"),
            Sanitizer::UrlEncode => f.write_str("url-encode"),
            Sanitizer::Truncate(n) => write!(f, "truncate({n})"),
        }
    }
}

impl FromStr for Sanitizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "none" => Ok(Sanitizer::None),
            "html-escape" => Ok(Sanitizer::HtmlEscape),
            "url-encode" => Ok(Sanitizer::UrlEncode),
            other => {
                let n = other
                    .strip_prefix("truncate(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|n| n.trim().parse::<usize>().ok())
                    .ok_or_else(|| format!("unknown sanitizer `{other}`"))?;
                if n == 0 {
                    return Err("truncate length must be at least 1".into());
                }
                Ok(Sanitizer::Truncate(n))
            }
        }
    }
}

impl TryFrom<String> for Sanitizer {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Sanitizer> for String {
    fn from(s: Sanitizer) -> String {
        s.to_string()
    }
}

pub fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Where one reflected field lands in the report. `template` is an HTML
/// fragment in which every `{value}` is replaced by the sanitized value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSink {
    pub field: FieldId,
    pub sanitizer: Sanitizer,
    pub template: String,
}

/// Outcome a correct pipeline produces against the mock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub tainted: usize,
    pub vulnerable: usize,
    /// Payload expected to confirm every vulnerable field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmed_by: Option<String>,
    /// Reason expected on unconfirmed trials of payloads longer than the
    /// sink allows (or of every payload when no length limit applies).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unconfirmed_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Replace non-ASCII whitespace with U+0020 when rendering, as text
    /// normalizers in report generators do.
    #[serde(default)]
    pub fold_unicode_spaces: bool,
    #[serde(rename = "field")]
    pub fields: Vec<FieldSink>,
    pub expected: Topology,
}

#[derive(Debug, thiserror::Error)]
pub enum MockError {
    #[error("target unreachable: {0}")]
    TargetUnreachable(#[from] ClientError),
    #[error("mock spec: {0}")]
    Spec(String),
}

impl MockSpec {
    pub fn from_toml(text: &str) -> Result<MockSpec, MockError> {
        let spec: MockSpec = toml::from_str(text).map_err(|e| MockError::Spec(e.to_string()))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<MockSpec, MockError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MockError::Spec(format!("{}: {e}", path.display())))?;
        MockSpec::from_toml(&text)
    }

    pub fn check(&self) -> Result<(), MockError> {
        if self.fields.is_empty() {
            return Err(MockError::Spec(format!("{}: no reflected fields", self.name)));
        }
        for f in &self.fields {
            if !f.template.contains("{value}") {
                return Err(MockError::Spec(format!("{}: template for {} lacks {{value}}", self.name, f.field)));
            }
        }
        if self.expected.vulnerable > self.expected.tainted {
            return Err(MockError::Spec(format!("{}: expects V > T", self.name)));
        }
        Ok(())
    }

    /// Distinct fields the mock copies into its report.
    pub fn reflected_fields(&self) -> Vec<FieldId> {
        let mut out: Vec<FieldId> = self.fields.iter().map(|f| f.field).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Renders the report for one response. Deterministic in its inputs.
    pub fn render_report(&self, target: &str, response: &HttpResponse) -> String {
        let mut rows = String::new();
        for sink in &self.fields {
            let Some(raw) = extract_field(response, sink.field) else { continue };
            let mut value = sink.sanitizer.apply(&raw);
            if self.fold_unicode_spaces {
                value = value
                    .chars()
                    .map(|c| if c.is_whitespace() && !c.is_ascii() { ' ' } else { c })
                    .collect();
            }
            rows.push_str(&sink.template.replace("{value}", &value));
            rows.push('\n');
        }
        format!(
            "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>{name} report</title></head>\n<body>\n<h1>{name}</h1>\n<p>Target: {target}</p>\n<p>Status: {status}</p>\n<table>\n{rows}</table>\n</body>\n</html>\n",
            name = html_escape(&self.name),
            target = html_escape(target),
            status = response.status,
        )
    }
}

/// Value of `field` in `response`, or `None` when the response lacks it.
pub fn extract_field(response: &HttpResponse, field: FieldId) -> Option<String> {
    match field {
        FieldId::StatusMessage => Some(response.reason.clone()).filter(|r| !r.is_empty()),
        FieldId::Body => Some(String::from_utf8_lossy(&response.body).into_owned()).filter(|b| !b.is_empty()),
        f => response.header(f.header_name()?).map(str::to_string),
    }
}

/// Scans `target_url` once and returns the rendered report.
pub fn run_mock(spec: &MockSpec, target_url: &str, timeout: Duration) -> Result<ReportArtifact, MockError> {
    let response = client::get(target_url, timeout)?;
    let html = spec.render_report(target_url, &response);
    Ok(ReportArtifact::from_content(&spec.name, 0, 0, target_url, html.into_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response(headers: &[(&str, &str)]) -> HttpResponse {
        HttpResponse {
            status: 200,
            reason: "OK".into(),
            headers: headers.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            body: Vec::new(),
        }
    }

    #[test]
    fn sanitizer_parsing() {
        for s in ["none", "html-escape", "url-encode", "truncate(36)"] {
            assert_eq!(s.parse::<Sanitizer>().unwrap().to_string(), s);
        }
        assert!("truncate(0)".parse::<Sanitizer>().is_err());
        assert!("rot13".parse::<Sanitizer>().is_err());
    }

    #[test]
    fn sanitizers() {
        assert_eq!(Sanitizer::HtmlEscape.apply("<a href='x'>&\""), "&lt;a href=&#39;x&#39;&gt;&amp;&quot;");
        assert_eq!(Sanitizer::UrlEncode.apply("a b\tc\u{a0}d"), "a%20b%09c\u{a0}d");
        assert_eq!(Sanitizer::Truncate(5).apply("abcdef"), "ab...");
        assert_eq!(Sanitizer::Truncate(6).apply("abcdef"), "abcdef");
        assert_eq!(Sanitizer::Truncate(2).apply("abcdef"), "..");
    }

    #[test]
    fn report_renders_present_fields_only() {
        let spec = MockSpec::from_toml(
            r#"
            name = "t"
            fold_unicode_spaces = true
            [[field]]
            field = "Server"
            sanitizer = "none"
            template = "<td>{value}</td>"
            [[field]]
            field = "Location"
            sanitizer = "none"
            template = "<a href='{value}'>{value}</a>"
            [expected]
            tainted = 2
            vulnerable = 2
            "#,
        )
        .unwrap();
        assert_eq!(spec.reflected_fields(), vec![FieldId::Server, FieldId::Location]);
        let html = spec.render_report("http://x/", &response(&[("server", "a\u{a0}b")]));
        assert!(html.contains("<td>a b</td>"));
        assert!(!html.contains("href"));
        assert_eq!(html, spec.render_report("http://x/", &response(&[("server", "a\u{a0}b")])));
    }

    #[test]
    fn spec_checks() {
        assert!(MockSpec::from_toml("name = \"e\"\nfield = []\n[expected]\ntainted = 0\nvulnerable = 0\n").is_err());
    }
}
