use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::journal::scan_file;
use super::{
    CraftedResponse, RequestLogEntry, TaintedFlow, VulnRecord, ARTIFACTS_FILE, REQUESTS_FILE,
    RESPONSES_FILE, TAINTED_FILE, TRIALS_FILE, VULNS_FILE,
};
use crate::field::FieldId;
use crate::ledger::Token;

/// Result of a full-ledger integrity check.
#[derive(Debug, Default, Clone, Serialize)]
pub struct AuditReport {
    pub records_checked: usize,
    /// `file:line` of records whose chained digest no longer matches.
    pub mutated: Vec<String>,
    /// `file:line` of lines that are not valid records.
    pub malformed: Vec<String>,
    /// Files with a trailing partial line (a write in progress).
    pub partial_tails: Vec<String>,
    pub referential: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.mutated.is_empty() && self.malformed.is_empty() && self.referential.is_empty()
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records checked:       {}", self.records_checked)?;
        writeln!(f, "mutated records:       {}", self.mutated.len())?;
        writeln!(f, "malformed lines:       {}", self.malformed.len())?;
        writeln!(f, "referential problems:  {}", self.referential.len())?;
        for m in self.mutated.iter().chain(&self.malformed).chain(&self.referential) {
            writeln!(f, "  {m}")?;
        }
        for p in &self.partial_tails {
            writeln!(f, "  note: {p} ends in a partial line")?;
        }
        write!(f, "{}", if self.is_clean() { "OK" } else { "FAILED" })
    }
}

/// Re-reads every database under `dir` and checks hash chains, record
/// invariants and cross-references.
pub fn audit(dir: &Path) -> io::Result<AuditReport> {
    let mut report = AuditReport::default();
    let mut decoded: HashMap<&str, Vec<(usize, String)>> = HashMap::new();
    for file in [
        RESPONSES_FILE,
        TAINTED_FILE,
        VULNS_FILE,
        REQUESTS_FILE,
        ARTIFACTS_FILE,
        TRIALS_FILE,
    ] {
        let scan = scan_file(&dir.join(file))?;
        report.records_checked += scan.records.len();
        report.mutated.extend(scan.broken.iter().map(|l| format!("{file}:{l}")));
        report.malformed.extend(scan.malformed.iter().map(|l| format!("{file}:{l}")));
        if scan.partial_tail {
            report.partial_tails.push(file.to_string());
        }
        decoded.insert(file, scan.records);
    }

    fn decode<T: serde::de::DeserializeOwned>(
        file: &str,
        rows: &[(usize, String)],
        report: &mut AuditReport,
    ) -> Vec<T> {
        rows.iter()
            .filter_map(|(line, raw)| match serde_json::from_str(raw) {
                Ok(v) => Some(v),
                Err(e) => {
                    report.malformed.push(format!("{file}:{line}: {e}"));
                    None
                }
            })
            .collect()
    }

    let responses: Vec<CraftedResponse> = decode(RESPONSES_FILE, &decoded[RESPONSES_FILE], &mut report);
    let flows: Vec<TaintedFlow> = decode(TAINTED_FILE, &decoded[TAINTED_FILE], &mut report);
    let vulns: Vec<VulnRecord> = decode(VULNS_FILE, &decoded[VULNS_FILE], &mut report);
    let requests: Vec<RequestLogEntry> = decode(REQUESTS_FILE, &decoded[REQUESTS_FILE], &mut report);

    let mut bindings: HashMap<(&str, &Token), FieldId> = HashMap::new();
    let mut seen_tokens: HashSet<&Token> = HashSet::new();
    let mut response_ids: HashSet<&str> = HashSet::new();
    for r in &responses {
        if !response_ids.insert(&r.response_id) {
            report.referential.push(format!("duplicate response id {}", r.response_id));
        }
        if let Err(e) = r.check_bindings() {
            report.referential.push(format!("{}: {e}", r.response_id));
        }
        for b in &r.bindings {
            if !seen_tokens.insert(&b.token) {
                report.referential.push(format!("token {} bound more than once", b.token));
            }
            bindings.insert((&r.response_id, &b.token), b.field);
        }
    }

    let mut flow_ids: HashSet<&str> = HashSet::new();
    for f in &flows {
        flow_ids.insert(&f.flow_id);
        match bindings.get(&(f.response_id.as_str(), &f.token)) {
            Some(field) if *field == f.source_field => {}
            Some(field) => report.referential.push(format!(
                "flow {}: source field {} but token is bound as {field}",
                f.flow_id, f.source_field
            )),
            None => report.referential.push(format!(
                "flow {}: token {} not bound in response {}",
                f.flow_id, f.token, f.response_id
            )),
        }
    }
    for v in &vulns {
        if !flow_ids.contains(v.flow_id.as_str()) {
            report
                .referential
                .push(format!("vulnerability {}: flow {} missing", v.vuln_id, v.flow_id));
        }
    }
    for r in &requests {
        if !response_ids.contains(r.response_id.as_str()) {
            report.referential.push(format!(
                "request at {} served unrecorded response {}",
                r.timestamp_ms, r.response_id
            ));
        }
    }
    Ok(report)
}
