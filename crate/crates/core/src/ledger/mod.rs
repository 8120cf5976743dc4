//! Campaign databases: crafted responses, tainted flows, confirmed
//! vulnerabilities, plus the stub request log, report artifacts and Phase-2
//! trial outcomes. Every database is an append-only hash-chained NDJSON file
//! under the campaign directory.

mod audit;
mod journal;
mod records;
mod token;

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use audit::{audit, AuditReport};
pub use records::{
    now_ms, Binding, ConfirmMethod, CraftedResponse, ReportArtifact, RequestLogEntry, Sink,
    TaintedFlow, TrialRecord, VulnRecord, EXCERPT_BYTES,
};
pub use token::{is_html_inert, InvalidToken, Token, TOKEN_LEN};

use journal::{read_records, Journal};

pub const RESPONSES_FILE: &str = "responses.ndjson";
pub const TAINTED_FILE: &str = "tainted.ndjson";
pub const VULNS_FILE: &str = "vulns.ndjson";
pub const REQUESTS_FILE: &str = "requests.ndjson";
pub const ARTIFACTS_FILE: &str = "artifacts.ndjson";
pub const TRIALS_FILE: &str = "trials.ndjson";
pub const MANIFEST_FILE: &str = "manifest";
pub const REPORTS_DIR: &str = "reports";

/// Identifier of the generator used for every seeded stream in a campaign.
pub const RNG_ALGORITHM: &str = "chacha20";

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("token {0} is already bound to a recorded response")]
    DuplicateToken(Token),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("crafted response violates its invariants: {0}")]
    InvalidResponse(String),
    #[error("campaign manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub campaign_id: String,
    pub rng_algorithm: String,
    pub master_seed: u64,
    /// How per-adapter and per-connection seeds derive from the master seed.
    pub seed_derivation: String,
    pub created_at_ms: u64,
}

impl Manifest {
    pub fn new(campaign_id: &str, master_seed: u64) -> Manifest {
        Manifest {
            campaign_id: campaign_id.to_string(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            master_seed,
            seed_derivation: "u64_le(sha256(seed_le || label)[..8])".to_string(),
            created_at_ms: now_ms(),
        }
    }
}

/// Deterministic sub-seed for a labelled stream.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// A token occurrence in report text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMatch {
    pub token: Token,
    pub offset: usize,
}

/// Every position of `report` holding something UUID-shaped, lowercased.
pub fn uuid_candidates(report: &[u8]) -> impl Iterator<Item = (usize, String)> + '_ {
    (0..report.len().saturating_sub(TOKEN_LEN - 1)).filter_map(move |i| {
        let w = &report[i..i + TOKEN_LEN];
        token::has_uuid_shape(w).then(|| (i, String::from_utf8_lossy(w).to_ascii_lowercase()))
    })
}

#[derive(Debug)]
struct Inner {
    responses: Journal,
    tainted: Journal,
    vulns: Journal,
    requests: Journal,
    artifacts: Journal,
    trials: Journal,
    crafted: Vec<CraftedResponse>,
    by_response: HashMap<String, usize>,
    by_token: HashMap<Token, (usize, crate::field::FieldId)>,
    flows: HashMap<String, TaintedFlow>,
    vuln_ids: HashMap<String, VulnRecord>,
}

/// Handle on one campaign directory. Appends are serialized by an in-process
/// mutex and an exclusive OS file lock per journal.
#[derive(Debug)]
pub struct Ledger {
    dir: PathBuf,
    manifest: Manifest,
    inner: Mutex<Inner>,
}

impl Ledger {
    /// Opens the campaign at `dir`, creating it (and its manifest) if needed.
    /// An existing manifest wins over `campaign_id` / `master_seed`.
    pub fn create(dir: &Path, campaign_id: &str, master_seed: u64) -> Result<Ledger, LedgerError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            let m = Manifest::new(campaign_id, master_seed);
            let text = serde_json::to_string_pretty(&m).map_err(io::Error::other)?;
            fs::write(&path, text + "\n")?;
        }
        Ledger::open(dir)
    }

    pub fn open(dir: &Path) -> Result<Ledger, LedgerError> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))
            .map_err(|e| LedgerError::Manifest(format!("{}: {e}", dir.display())))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| LedgerError::Manifest(e.to_string()))?;

        let crafted: Vec<CraftedResponse> = read_records(&dir.join(RESPONSES_FILE))?;
        let mut by_response = HashMap::new();
        let mut by_token = HashMap::new();
        for (i, c) in crafted.iter().enumerate() {
            by_response.insert(c.response_id.clone(), i);
            for b in &c.bindings {
                by_token.insert(b.token.clone(), (i, b.field));
            }
        }
        let flows = read_records::<TaintedFlow>(&dir.join(TAINTED_FILE))?
            .into_iter()
            .map(|f| (f.flow_id.clone(), f))
            .collect();
        let vuln_ids = read_records::<VulnRecord>(&dir.join(VULNS_FILE))?
            .into_iter()
            .map(|v| (v.vuln_id.clone(), v))
            .collect();

        let inner = Inner {
            responses: Journal::open(&dir.join(RESPONSES_FILE))?,
            tainted: Journal::open(&dir.join(TAINTED_FILE))?,
            vulns: Journal::open(&dir.join(VULNS_FILE))?,
            requests: Journal::open(&dir.join(REQUESTS_FILE))?,
            artifacts: Journal::open(&dir.join(ARTIFACTS_FILE))?,
            trials: Journal::open(&dir.join(TRIALS_FILE))?,
            crafted,
            by_response,
            by_token,
            flows,
            vuln_ids,
        };
        Ok(Ledger {
            dir: dir.to_path_buf(),
            manifest,
            inner: Mutex::new(inner),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn campaign_id(&self) -> &str {
        &self.manifest.campaign_id
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Appends a crafted response and returns its assigned id.
    pub fn record_response(&self, mut crafted: CraftedResponse) -> Result<String, LedgerError> {
        crafted
            .check_bindings()
            .map_err(LedgerError::InvalidResponse)?;
        let mut inner = self.lock();
        for (i, b) in crafted.bindings.iter().enumerate() {
            if inner.by_token.contains_key(&b.token)
                || crafted.bindings[..i].iter().any(|o| o.token == b.token)
            {
                return Err(LedgerError::DuplicateToken(b.token.clone()));
            }
        }
        let id = format!("resp-{:06}", inner.crafted.len() + 1);
        crafted.response_id = id.clone();
        inner.responses.append(&crafted)?;
        let idx = inner.crafted.len();
        for b in &crafted.bindings {
            inner.by_token.insert(b.token.clone(), (idx, b.field));
        }
        inner.by_response.insert(id.clone(), idx);
        inner.crafted.push(crafted);
        Ok(id)
    }

    pub fn response(&self, response_id: &str) -> Option<CraftedResponse> {
        let inner = self.lock();
        inner
            .by_response
            .get(response_id)
            .map(|&i| inner.crafted[i].clone())
    }

    pub fn lookup_by_token(&self, token: &Token) -> Option<(String, crate::field::FieldId)> {
        let inner = self.lock();
        inner
            .by_token
            .get(token)
            .map(|&(i, f)| (inner.crafted[i].response_id.clone(), f))
    }

    pub fn responses(&self) -> Vec<CraftedResponse> {
        self.lock().crafted.clone()
    }

    /// Every occurrence of every stored token in `report`, ordered by offset.
    /// Hex digits match case-insensitively.
    pub fn match_tokens(&self, report: &[u8]) -> Vec<TokenMatch> {
        let inner = self.lock();
        uuid_candidates(report)
            .filter_map(|(offset, lower)| {
                let token = Token::parse(&lower).ok()?;
                inner
                    .by_token
                    .contains_key(&token)
                    .then_some(TokenMatch { token, offset })
            })
            .collect()
    }

    /// Appends a flow unless one with the same natural key exists.
    pub fn record_tainted(&self, flow: TaintedFlow) -> Result<String, LedgerError> {
        let mut inner = self.lock();
        let Some(&idx) = inner.by_response.get(&flow.response_id) else {
            return Err(LedgerError::DanglingReference(format!(
                "response {} for flow {}",
                flow.response_id, flow.flow_id
            )));
        };
        match inner.crafted[idx].binding(&flow.token) {
            Some(b) if b.field == flow.source_field => {}
            _ => {
                return Err(LedgerError::DanglingReference(format!(
                    "token {} as {} in response {}",
                    flow.token, flow.source_field, flow.response_id
                )))
            }
        }
        if inner.flows.contains_key(&flow.flow_id) {
            return Ok(flow.flow_id);
        }
        inner.tainted.append(&flow)?;
        let id = flow.flow_id.clone();
        inner.flows.insert(id.clone(), flow);
        Ok(id)
    }

    pub fn flow(&self, flow_id: &str) -> Option<TaintedFlow> {
        self.lock().flows.get(flow_id).cloned()
    }

    /// Flows in insertion order.
    pub fn tainted_flows(&self) -> io::Result<Vec<TaintedFlow>> {
        read_records(&self.dir.join(TAINTED_FILE))
    }

    pub fn record_vuln(&self, rec: VulnRecord) -> Result<String, LedgerError> {
        let mut inner = self.lock();
        if !inner.flows.contains_key(&rec.flow_id) {
            return Err(LedgerError::DanglingReference(format!(
                "flow {} for vulnerability {}",
                rec.flow_id, rec.vuln_id
            )));
        }
        if inner.vuln_ids.contains_key(&rec.vuln_id) {
            return Ok(rec.vuln_id);
        }
        inner.vulns.append(&rec)?;
        let id = rec.vuln_id.clone();
        inner.vuln_ids.insert(id.clone(), rec);
        Ok(id)
    }

    pub fn vulns(&self) -> io::Result<Vec<VulnRecord>> {
        read_records(&self.dir.join(VULNS_FILE))
    }

    pub fn log_request(&self, entry: &RequestLogEntry) -> Result<(), LedgerError> {
        Ok(self.lock().requests.append(entry)?)
    }

    pub fn requests(&self) -> io::Result<Vec<RequestLogEntry>> {
        read_records(&self.dir.join(REQUESTS_FILE))
    }

    /// Writes the report bytes under `reports/` and appends its metadata.
    pub fn save_artifact(
        &self,
        scanner: &str,
        phase: u8,
        round: u32,
        label: &str,
        content: &[u8],
    ) -> Result<ReportArtifact, LedgerError> {
        let digest = hex::encode(Sha256::digest(content));
        let artifact_id = records::natural_id("art", &[scanner, &phase.to_string(), label, &digest]);
        let rel = format!("{REPORTS_DIR}/{}/{}-{}.html", sanitize(scanner), label, &artifact_id[4..]);
        let path = self.dir.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, content)?;
        let art = ReportArtifact {
            artifact_id,
            scanner: scanner.to_string(),
            round,
            phase,
            source: rel,
            sha256: digest,
            fetched_at_ms: now_ms(),
            content: content.to_vec(),
        };
        self.lock().artifacts.append(&art)?;
        Ok(art)
    }

    /// Artifact metadata with content loaded from disk.
    pub fn artifacts(&self) -> io::Result<Vec<ReportArtifact>> {
        let mut arts: Vec<ReportArtifact> = read_records(&self.dir.join(ARTIFACTS_FILE))?;
        for a in &mut arts {
            let p = Path::new(&a.source);
            let p = if p.is_absolute() { p.to_path_buf() } else { self.dir.join(p) };
            a.content = fs::read(p)?;
        }
        Ok(arts)
    }

    pub fn record_trial(&self, trial: &TrialRecord) -> Result<(), LedgerError> {
        Ok(self.lock().trials.append(trial)?)
    }

    pub fn trials(&self) -> io::Result<Vec<TrialRecord>> {
        read_records(&self.dir.join(TRIALS_FILE))
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
