use std::time::{SystemTime, UNIX_EPOCH};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Token;
use crate::field::FieldId;
use crate::grammar::ResponseTemplate;
use crate::message::{find_all, render_http, HttpMessage};

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or_default()
}

/// Short stable id derived from a natural key.
pub(crate) fn natural_id(prefix: &str, parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    format!("{prefix}-{}", &hex::encode(h.finalize())[..16])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub token: Token,
    pub field: FieldId,
    /// Byte offset of the token in the rendered response.
    pub offset: usize,
}

/// An instantiated, tokenized response as served to a scanner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CraftedResponse {
    /// Assigned by the ledger on record.
    pub response_id: String,
    pub campaign_id: String,
    pub template_seed: u64,
    pub message: HttpMessage,
    pub bindings: Vec<Binding>,
    pub created_at_ms: u64,
}

impl CraftedResponse {
    /// Binds every placeholder of `template` to a fresh token drawn from `rng`.
    pub fn from_template(
        template: &ResponseTemplate,
        campaign_id: &str,
        rng: &mut impl RngCore,
    ) -> CraftedResponse {
        let mut fresh: Vec<(Token, FieldId)> = Vec::new();
        let message = template.instantiate(|_, field| {
            let t = Token::generate(rng);
            let s = t.to_string();
            fresh.push((t, field));
            s
        });
        let rendered = render_http(&message);
        let bindings = fresh
            .into_iter()
            .map(|(token, field)| {
                let offset = find_all(&rendered, token.as_str().as_bytes())
                    .first()
                    .copied()
                    .expect("token was just rendered");
                Binding { token, field, offset }
            })
            .collect();
        CraftedResponse {
            response_id: String::new(),
            campaign_id: campaign_id.to_string(),
            template_seed: template.seed,
            message,
            bindings,
            created_at_ms: now_ms(),
        }
    }

    pub fn rendered(&self) -> Vec<u8> {
        render_http(&self.message)
    }

    pub fn binding(&self, token: &Token) -> Option<&Binding> {
        self.bindings.iter().find(|b| &b.token == token)
    }

    /// Checks that each bound token occurs exactly once, at its offset.
    pub fn check_bindings(&self) -> Result<(), String> {
        let rendered = self.rendered();
        for b in &self.bindings {
            let hits = find_all(&rendered, b.token.as_str().as_bytes());
            if hits != [b.offset] {
                return Err(format!(
                    "token {} expected once at {}, found at {:?}",
                    b.token, b.offset, hits
                ));
            }
        }
        Ok(())
    }
}

/// Where a token resurfaced in a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sink {
    pub artifact_id: String,
    pub offset: usize,
    /// Up to 64 bytes of the report centred on the occurrence (lossy UTF-8).
    pub excerpt: String,
}

pub const EXCERPT_BYTES: usize = 64;

impl Sink {
    pub fn new(artifact_id: &str, content: &[u8], offset: usize, len: usize) -> Sink {
        let pad = EXCERPT_BYTES.saturating_sub(len) / 2;
        let start = offset.saturating_sub(pad);
        let end = (start + EXCERPT_BYTES).min(content.len());
        Sink {
            artifact_id: artifact_id.to_string(),
            offset,
            excerpt: String::from_utf8_lossy(&content[start..end]).into_owned(),
        }
    }
}

/// Evidence that a token from a crafted response reached a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintedFlow {
    pub flow_id: String,
    pub scanner: String,
    pub token: Token,
    pub source_field: FieldId,
    pub response_id: String,
    pub sink: Sink,
    pub round: u32,
}

impl TaintedFlow {
    pub fn new(
        scanner: &str,
        token: Token,
        source_field: FieldId,
        response_id: &str,
        sink: Sink,
        round: u32,
    ) -> TaintedFlow {
        let flow_id = natural_id(
            "flow",
            &[token.as_str(), &sink.artifact_id, &sink.offset.to_string()],
        );
        TaintedFlow {
            flow_id,
            scanner: scanner.to_string(),
            token,
            source_field,
            response_id: response_id.to_string(),
            sink,
            round,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfirmMethod {
    StaticContext,
    BrowserAlert,
}

/// A tainted flow confirmed exploitable by one payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnRecord {
    pub vuln_id: String,
    pub flow_id: String,
    pub scanner: String,
    pub source_field: FieldId,
    pub payload_id: String,
    pub method: ConfirmMethod,
    pub evidence: String,
}

impl VulnRecord {
    pub fn new(
        flow: &TaintedFlow,
        payload_id: &str,
        method: ConfirmMethod,
        evidence: impl Into<String>,
    ) -> VulnRecord {
        let method_name = match method {
            ConfirmMethod::StaticContext => "static-context",
            ConfirmMethod::BrowserAlert => "browser-alert",
        };
        VulnRecord {
            vuln_id: natural_id("vuln", &[&flow.flow_id, payload_id, method_name]),
            flow_id: flow.flow_id.clone(),
            scanner: flow.scanner.clone(),
            source_field: flow.source_field,
            payload_id: payload_id.to_string(),
            method,
            evidence: evidence.into(),
        }
    }
}

/// A scanner report saved into the campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportArtifact {
    pub artifact_id: String,
    pub scanner: String,
    pub round: u32,
    pub phase: u8,
    /// Path relative to the campaign directory, or an absolute path / URL.
    pub source: String,
    pub sha256: String,
    pub fetched_at_ms: u64,
    #[serde(skip)]
    pub content: Vec<u8>,
}

impl ReportArtifact {
    /// Artifact not (yet) stored in a campaign; `source` names where it came from.
    pub fn from_content(scanner: &str, phase: u8, round: u32, source: &str, content: Vec<u8>) -> ReportArtifact {
        let sha256 = hex::encode(Sha256::digest(&content));
        ReportArtifact {
            artifact_id: natural_id("art", &[scanner, &phase.to_string(), source, &sha256]),
            scanner: scanner.to_string(),
            round,
            phase,
            source: source.to_string(),
            sha256,
            fetched_at_ms: now_ms(),
            content,
        }
    }
}

/// One request answered by the stub.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestLogEntry {
    pub timestamp_ms: u64,
    pub peer: String,
    pub request_line: String,
    pub headers: Vec<String>,
    pub response_id: String,
    pub mode: String,
}

/// Outcome of one Phase-2 payload attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scanner: String,
    pub flow_id: String,
    pub source_field: FieldId,
    pub payload_id: String,
    pub artifact_id: Option<String>,
    pub confirmed: bool,
    pub reason: String,
}
