//! The test driver: runs scanners against the stub, collects their reports
//! and sequences the two phases.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io;
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{info, warn};
use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde::Deserialize;
use wait_timeout::ChildExt;

use crate::analyzer::{check_exploit_static, find_tainted_flows, write_analysis, Analysis};
use crate::client::{self, ClientError};
use crate::field::FieldId;
use crate::grammar::{builtin_grammar, Pcfg};
use crate::ledger::{
    derive_seed, ConfirmMethod, Ledger, LedgerError, ReportArtifact, TaintedFlow, TrialRecord,
    VulnRecord,
};
use crate::payload::{builtin_payloads, load_payloads, Payload, PayloadError};
use crate::stub::{serve, StubError, StubHandle, StubMode};

pub const RESPONSIBLE_USE_NOTICE: &str = "\
*** revstrike sends crafted, XSS-carrying HTTP responses to the scanners it is pointed at. ***
*** Only test systems you own or are explicitly authorized to test.                       ***";

pub const DEFAULT_ROUNDS: u32 = 10;
pub const DEFAULT_TIMEOUT_SECS: f64 = 300.0;
const PROBE_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("config: {0}")]
    Config(String),
    #[error("stub start failure: {0}")]
    StubStartFailure(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("{name}: no report after {secs}s")]
    AdapterTimeout { name: String, secs: f64 },
    #[error("{name}: {message}")]
    Failed { name: String, message: String },
    #[error("{0}: empty report")]
    EmptyReport(String),
    #[error(transparent)]
    Http(#[from] ClientError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdapterKind {
    /// argv with `{target}`, `{report_path}` and `{config_dir}` placeholders.
    Command { argv: Vec<String> },
    /// URL templates with a `{target}` placeholder (substituted percent-encoded).
    HttpApi { trigger_url: String, report_url: String },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawAdapter")]
pub struct ScannerAdapter {
    pub name: String,
    pub kind: AdapterKind,
    pub timeout: Duration,
    pub rounds: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdapter {
    name: String,
    kind: String,
    argv: Option<Vec<String>>,
    trigger_url: Option<String>,
    report_url: Option<String>,
    timeout: Option<f64>,
    rounds: Option<u32>,
}

impl TryFrom<RawAdapter> for ScannerAdapter {
    type Error = String;

    fn try_from(r: RawAdapter) -> Result<Self, String> {
        let kind = match (r.kind.as_str(), r.argv, r.trigger_url, r.report_url) {
            ("command", Some(argv), None, None) if !argv.is_empty() => AdapterKind::Command { argv },
            ("http-api", None, Some(trigger_url), Some(report_url)) => AdapterKind::HttpApi {
                trigger_url,
                report_url,
            },
            ("command", ..) => return Err(format!("{}: command adapters take a non-empty argv only", r.name)),
            ("http-api", ..) => {
                return Err(format!("{}: http-api adapters take trigger_url and report_url only", r.name))
            }
            (k, ..) => return Err(format!("{}: unknown adapter kind `{k}`", r.name)),
        };
        ScannerAdapter::new(&r.name, kind, r.timeout.unwrap_or(DEFAULT_TIMEOUT_SECS), r.rounds.unwrap_or(DEFAULT_ROUNDS))
    }
}

impl ScannerAdapter {
    pub fn new(name: &str, kind: AdapterKind, timeout_secs: f64, rounds: u32) -> Result<ScannerAdapter, String> {
        if name.is_empty() {
            return Err("adapter name is empty".into());
        }
        if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
            return Err(format!("{name}: timeout must be positive"));
        }
        if rounds == 0 {
            return Err(format!("{name}: rounds must be at least 1"));
        }
        Ok(ScannerAdapter {
            name: name.to_string(),
            kind,
            timeout: Duration::from_secs_f64(timeout_secs),
            rounds,
        })
    }

    /// Triggers one scan of `target` and returns the report bytes.
    pub fn run(&self, target: &str, report_path: &Path, config_dir: &Path) -> Result<Vec<u8>, AdapterError> {
        let failed = |message: String| AdapterError::Failed {
            name: self.name.clone(),
            message,
        };
        let content = match &self.kind {
            AdapterKind::Command { argv } => {
                let args: Vec<String> = argv
                    .iter()
                    .map(|a| {
                        a.replace("{target}", target)
                            .replace("{report_path}", &report_path.to_string_lossy())
                            .replace("{config_dir}", &config_dir.to_string_lossy())
                    })
                    .collect();
                let _ = fs::remove_file(report_path);
                let stderr = fs::File::create(report_path.with_extension("stderr.log"))
                    .map_err(|e| failed(e.to_string()))?;
                let mut child = Command::new(resolve_program(&args[0]))
                    .args(&args[1..])
                    .stdin(Stdio::null())
                    .stdout(Stdio::null())
                    .stderr(stderr)
                    .spawn()
                    .map_err(|e| failed(format!("cannot start {}: {e}", args[0])))?;
                let status = match child.wait_timeout(self.timeout).map_err(|e| failed(e.to_string()))? {
                    Some(s) => s,
                    None => {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(AdapterError::AdapterTimeout {
                            name: self.name.clone(),
                            secs: self.timeout.as_secs_f64(),
                        });
                    }
                };
                if !status.success() {
                    return Err(failed(format!("scanner exited with {status}")));
                }
                fs::read(report_path).map_err(|e| failed(format!("{}: {e}", report_path.display())))?
            }
            AdapterKind::HttpApi {
                trigger_url,
                report_url,
            } => {
                let started = Instant::now();
                let encoded = utf8_percent_encode(target, NON_ALPHANUMERIC).to_string();
                let trigger = client::get(&trigger_url.replace("{target}", &encoded), self.timeout)?;
                if !(200..300).contains(&trigger.status) {
                    return Err(failed(format!("scan trigger answered {}", trigger.status)));
                }
                let left = self.timeout.saturating_sub(started.elapsed());
                if left.is_zero() {
                    return Err(AdapterError::AdapterTimeout {
                        name: self.name.clone(),
                        secs: self.timeout.as_secs_f64(),
                    });
                }
                let report = client::get(&report_url.replace("{target}", &encoded), left)?;
                if !(200..300).contains(&report.status) {
                    return Err(failed(format!("report fetch answered {}", report.status)));
                }
                report.body
            }
        };
        if content.is_empty() {
            return Err(AdapterError::EmptyReport(self.name.clone()));
        }
        Ok(content)
    }
}

/// A bare program name that also exists next to the running executable is
/// taken from there, so bundled tools work without being on PATH.
fn resolve_program(program: &str) -> PathBuf {
    if !program.contains(std::path::MAIN_SEPARATOR) {
        if let Some(dir) = std::env::current_exe().ok().and_then(|p| p.parent().map(Path::to_path_buf)) {
            let sibling = dir.join(format!("{program}{}", std::env::consts::EXE_SUFFIX));
            if sibling.is_file() {
                return sibling;
            }
        }
    }
    PathBuf::from(program)
}

fn default_bind() -> String {
    "127.0.0.1:0".to_string()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub campaign_id: String,
    pub seed: u64,
    #[serde(default = "default_bind")]
    pub bind: String,
    /// URL scanners are pointed at; `{port}` becomes the bound port.
    /// Defaults to the bound address.
    #[serde(default)]
    pub target: Option<String>,
    /// Payload file; the builtin list when absent.
    #[serde(default)]
    pub payloads: Option<PathBuf>,
    /// Grammar file; the builtin grammar when absent.
    #[serde(default)]
    pub grammar: Option<PathBuf>,
    /// Seconds between Phase-2 trials against one scanner.
    #[serde(default)]
    pub politeness_delay: f64,
    #[serde(default, rename = "adapter")]
    pub adapters: Vec<ScannerAdapter>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub config_dir: PathBuf,
}

impl CampaignConfig {
    pub fn from_toml(text: &str, config_dir: &Path) -> Result<CampaignConfig, OrchestratorError> {
        let mut c: CampaignConfig = toml::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        c.config_dir = config_dir.to_path_buf();
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<CampaignConfig, OrchestratorError> {
        let text = fs::read_to_string(path)
            .map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
        CampaignConfig::from_toml(&text, &dir)
    }

    pub fn check(&self) -> Result<(), OrchestratorError> {
        let mut names = HashSet::new();
        for a in &self.adapters {
            if !names.insert(a.name.as_str()) {
                return Err(OrchestratorError::Config(format!("duplicate adapter {}", a.name)));
            }
        }
        if !(self.politeness_delay >= 0.0 && self.politeness_delay.is_finite()) {
            return Err(OrchestratorError::Config("politeness_delay must be >= 0".into()));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_dir.join(p)
        }
    }

    pub fn load_payloads(&self) -> Result<Vec<Payload>, OrchestratorError> {
        match &self.payloads {
            Some(p) => Ok(load_payloads(&self.resolve(p))?),
            None => Ok(builtin_payloads()),
        }
    }

    pub fn load_grammar(&self) -> Result<Pcfg, OrchestratorError> {
        let g = match &self.grammar {
            Some(p) => {
                let text = fs::read_to_string(self.resolve(p))?;
                Pcfg::from_text(&text)
                    .map_err(|e| OrchestratorError::Config(format!("grammar: {e}")))?
                    .with_epsilon_closure()
            }
            None => builtin_grammar(),
        };
        let violations = g.validate();
        if let Some(v) = violations.first() {
            return Err(OrchestratorError::Config(format!(
                "grammar has {} violation(s), first: {v}",
                violations.len()
            )));
        }
        Ok(g)
    }

    /// Target URL for a stub bound at `addr`.
    pub fn target_for(&self, addr: SocketAddr) -> String {
        match &self.target {
            Some(t) => t.replace("{port}", &addr.port().to_string()),
            None => {
                let mut a = addr;
                if a.ip().is_unspecified() {
                    a.set_ip([127, 0, 0, 1].into());
                }
                format!("http://{a}/")
            }
        }
    }
}

/// Checks that connecting to `target` reaches `stub`.
pub fn self_probe(stub: &StubHandle, target: &str) -> Result<(), OrchestratorError> {
    let bad = |m: String| OrchestratorError::Config(format!("self-probe of {target}: {m}"));
    let url = url::Url::parse(target).map_err(|e| bad(e.to_string()))?;
    let host = url.host_str().ok_or_else(|| bad("no host".into()))?;
    let port = url.port_or_known_default().ok_or_else(|| bad("no port".into()))?;
    let addrs: Vec<SocketAddr> = (host.trim_start_matches('[').trim_end_matches(']'), port)
        .to_socket_addrs()
        .map_err(|e| bad(e.to_string()))?
        .collect();
    let before = stub.accepted();
    let connected = addrs
        .iter()
        .any(|a| TcpStream::connect_timeout(a, PROBE_TIMEOUT).is_ok());
    if !connected {
        return Err(bad("connection refused".into()));
    }
    let deadline = Instant::now() + PROBE_TIMEOUT;
    while stub.accepted() == before {
        if Instant::now() > deadline {
            return Err(bad(format!("reached a listener other than the stub at {}", stub.local_addr())));
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    Ok(())
}

fn work_dir(ledger: &Ledger) -> io::Result<PathBuf> {
    let d = ledger.dir().join("work");
    fs::create_dir_all(&d)?;
    Ok(d)
}

fn start_stub(config: &CampaignConfig, mode: StubMode, ledger: &Arc<Ledger>) -> Result<(StubHandle, String), OrchestratorError> {
    let stub = serve(config.bind.as_str(), mode, Arc::clone(ledger)).map_err(|e| match e {
        StubError::BindFailure(_) => OrchestratorError::StubStartFailure(e.to_string()),
        StubError::InvalidMode(m) => OrchestratorError::Config(m),
    })?;
    let target = config.target_for(stub.local_addr());
    self_probe(&stub, &target)?;
    Ok((stub, target))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdapterPhase1 {
    pub name: String,
    pub rounds_completed: u32,
    /// `(round, error)` for every skipped round.
    pub skipped: Vec<(u32, String)>,
    pub flows: usize,
    pub tainted_fields: BTreeSet<FieldId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Phase1Summary {
    pub adapters: Vec<AdapterPhase1>,
}

/// Per adapter: stub in Phase-1 mode, `rounds` scans, every report saved and
/// searched for tokens.
pub fn run_phase1(config: &CampaignConfig, ledger: &Arc<Ledger>) -> Result<Phase1Summary, OrchestratorError> {
    let grammar = Arc::new(config.load_grammar()?);
    let work = work_dir(ledger)?;
    let mut summary = Phase1Summary::default();
    for adapter in &config.adapters {
        // The response count keeps reruns on the same campaign from replaying tokens.
        let label = format!("phase1/{}/{}", adapter.name, ledger.responses().len());
        let seed = derive_seed(ledger.manifest().master_seed, &label);
        let mode = StubMode::Phase1 {
            grammar: Arc::clone(&grammar),
            seed,
        };
        let (stub, target) = start_stub(config, mode, ledger)?;
        info!("phase 1: {} against {target}", adapter.name);
        let mut result = AdapterPhase1 {
            name: adapter.name.clone(),
            rounds_completed: 0,
            skipped: Vec::new(),
            flows: 0,
            tainted_fields: BTreeSet::new(),
        };
        for round in 0..adapter.rounds {
            let report_path = work.join(format!("{}-p1-r{round}.html", adapter.name));
            let content = match adapter.run(&target, &report_path, &config.config_dir) {
                Ok(c) => c,
                Err(e) => {
                    warn!("phase 1 round {round} skipped: {e}");
                    result.skipped.push((round, e.to_string()));
                    continue;
                }
            };
            let art = ledger.save_artifact(&adapter.name, 1, round, &format!("p1-r{round}"), &content)?;
            for flow in find_tainted_flows(&art, ledger) {
                result.tainted_fields.insert(flow.source_field);
                ledger.record_tainted(flow)?;
                result.flows += 1;
            }
            result.rounds_completed += 1;
        }
        stub.shutdown();
        summary.adapters.push(result);
    }
    Ok(summary)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdapterPhase2 {
    pub name: String,
    pub trials: Vec<TrialRecord>,
    pub vulns: Vec<VulnRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Phase2Summary {
    pub adapters: Vec<AdapterPhase2>,
}

/// First flow of each (scanner, field), in ledger order.
pub fn phase2_targets(flows: &[TaintedFlow], scanner: &str) -> Vec<TaintedFlow> {
    let mut seen = BTreeSet::new();
    flows
        .iter()
        .filter(|f| f.scanner == scanner && seen.insert(f.source_field))
        .cloned()
        .collect()
}

/// Per (scanner, field): replays the tainted response with each payload in
/// priority order until the static checker confirms one.
pub fn run_phase2(config: &CampaignConfig, ledger: &Arc<Ledger>) -> Result<Phase2Summary, OrchestratorError> {
    let payloads = config.load_payloads()?;
    let flows = ledger.tainted_flows()?;
    let confirmed: HashSet<(String, FieldId)> = ledger
        .vulns()?
        .into_iter()
        .map(|v| (v.scanner, v.source_field))
        .collect();
    let delay = Duration::from_secs_f64(config.politeness_delay);
    let work = work_dir(ledger)?;
    let mut summary = Phase2Summary::default();

    for adapter in &config.adapters {
        let mut result = AdapterPhase2 {
            name: adapter.name.clone(),
            ..Default::default()
        };
        let mut first_trial = true;
        for flow in phase2_targets(&flows, &adapter.name) {
            if confirmed.contains(&(flow.scanner.clone(), flow.source_field)) {
                continue;
            }
            for payload in &payloads {
                if !first_trial {
                    std::thread::sleep(delay);
                }
                first_trial = false;
                let (trial, vuln) = run_trial(config, ledger, adapter, &flow, payload, &work)?;
                ledger.record_trial(&trial)?;
                result.trials.push(trial);
                if let Some(v) = vuln {
                    ledger.record_vuln(v.clone())?;
                    result.vulns.push(v);
                    break;
                }
            }
        }
        summary.adapters.push(result);
    }
    Ok(summary)
}

fn run_trial(
    config: &CampaignConfig,
    ledger: &Arc<Ledger>,
    adapter: &ScannerAdapter,
    flow: &TaintedFlow,
    payload: &Payload,
    work: &Path,
) -> Result<(TrialRecord, Option<VulnRecord>), OrchestratorError> {
    let mode = StubMode::Phase2 {
        response_id: flow.response_id.clone(),
        target_token: flow.token.clone(),
        payload: payload.clone(),
    };
    let (stub, target) = start_stub(config, mode, ledger)?;
    let label = format!("p2-{}-{}", flow.source_field, payload.payload_id);
    let report_path = work.join(format!("{}-{label}.html", adapter.name));
    let outcome = adapter.run(&target, &report_path, &config.config_dir);
    stub.shutdown();

    let mut trial = TrialRecord {
        scanner: adapter.name.clone(),
        flow_id: flow.flow_id.clone(),
        source_field: flow.source_field,
        payload_id: payload.payload_id.clone(),
        artifact_id: None,
        confirmed: false,
        reason: String::new(),
    };
    let content = match outcome {
        Ok(c) => c,
        Err(e) => {
            warn!("phase 2 trial {label} for {} skipped: {e}", adapter.name);
            trial.reason = format!("adapter-error: {e}");
            return Ok((trial, None));
        }
    };
    let art: ReportArtifact = ledger.save_artifact(&adapter.name, 2, 0, &label, &content)?;
    trial.artifact_id = Some(art.artifact_id);
    match check_exploit_static(&content, payload) {
        Ok(v) => {
            trial.confirmed = v.confirmed;
            trial.reason = v.reason.to_string();
            let vuln = v
                .confirmed
                .then(|| VulnRecord::new(flow, &payload.payload_id, ConfirmMethod::StaticContext, v.evidence));
            Ok((trial, vuln))
        }
        Err(e) => {
            trial.reason = format!("parse-failure: {e}");
            Ok((trial, None))
        }
    }
}

/// Re-runs flow detection over every Phase-1 report in the campaign
/// (including ones deposited by external harnesses) and computes statistics.
pub fn analyze(ledger: &Ledger) -> Result<Analysis, OrchestratorError> {
    let artifacts = ledger.artifacts()?;
    for art in artifacts.iter().filter(|a| a.phase == 1) {
        for flow in find_tainted_flows(art, ledger) {
            ledger.record_tainted(flow)?;
        }
    }
    let scanners: Vec<String> = artifacts
        .iter()
        .filter(|a| a.phase == 1)
        .map(|a| a.scanner.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(Analysis::compute(&scanners, &ledger.tainted_flows()?, &ledger.vulns()?))
}

/// `analyze` plus writing its outputs into the campaign directory.
pub fn analyze_and_write(ledger: &Ledger) -> Result<Analysis, OrchestratorError> {
    let a = analyze(ledger)?;
    write_analysis(&a, ledger.dir())?;
    Ok(a)
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub table: String,
    pub exit_code: i32,
    pub analysis: Analysis,
}

/// Name/T/V table; exit code 2 when any vulnerability is confirmed, else 0.
pub fn summarize(ledger: &Ledger) -> Result<Summary, OrchestratorError> {
    let analysis = analyze(ledger)?;
    Ok(Summary {
        table: analysis.table(),
        exit_code: if analysis.any_vulnerable() { 2 } else { 0 },
        analysis,
    })
}
