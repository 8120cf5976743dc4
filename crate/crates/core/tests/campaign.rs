mod common;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use common::{expected_topology, fixture_config, run_fixture_campaign};
use revstrike::client::get;
use revstrike::ledger::{audit, Ledger, TAINTED_FILE};
use revstrike::orchestrator::{run_phase1, run_phase2, summarize, AdapterKind, CampaignConfig, ScannerAdapter};

#[test]
fn fixture_campaign_recovers_every_declared_topology() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_fixture_campaign(dir.path());
    assert_eq!(run.summary.exit_code, 2);
    for row in &run.summary.analysis.rows {
        let want = expected_topology(&row.name);
        assert_eq!((row.tainted, row.vulnerable), (want.tainted, want.vulnerable), "{}", row.name);
    }
    assert_eq!(run.summary.analysis.rows.len(), 4);
    for a in &run.phase1.adapters {
        assert_eq!(a.rounds_completed, 10, "{}", a.name);
        assert!(a.skipped.is_empty());
    }
    for a in &run.phase2.adapters {
        let want = expected_topology(&a.name);
        if let Some(by) = &want.confirmed_by {
            assert!(a.vulns.iter().all(|v| &v.payload_id == by), "{}", a.name);
        }
        if let Some(reason) = &want.unconfirmed_reason {
            assert!(a.trials.iter().any(|t| !t.confirmed && &t.reason == reason), "{}", a.name);
        }
        // Confirmation stops the payload sequence for that field.
        let mut per_field: BTreeMap<_, Vec<bool>> = BTreeMap::new();
        for t in &a.trials {
            per_field.entry(t.source_field).or_default().push(t.confirmed);
        }
        for outcomes in per_field.values() {
            assert!(outcomes[..outcomes.len() - 1].iter().all(|c| !c));
        }
    }
    let report = audit(dir.path()).unwrap();
    assert!(report.is_clean(), "{report}");
}

#[test]
fn rerunning_phase2_adds_no_trials_for_confirmed_fields() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_fixture_campaign(dir.path());
    let before = run.ledger.trials().unwrap().len();
    let again = run_phase2(&fixture_config(), &run.ledger).unwrap();
    let echoing = again.adapters.iter().find(|a| a.name == "echoing").unwrap();
    assert!(echoing.trials.is_empty());
    assert!(run.ledger.trials().unwrap().len() > before, "unconfirmed fields are retried");
    assert_eq!(summarize(&run.ledger).unwrap().analysis.rows, run.summary.analysis.rows);
}

#[test]
fn same_seed_same_tainted_journal() {
    let strip = |dir: &std::path::Path| -> Vec<String> {
        let text = fs::read_to_string(dir.join(TAINTED_FILE)).unwrap();
        // Reports embed the target URL and so the ephemeral port, which feeds
        // artifact and flow ids; the seeded parts of each flow must match.
        text.lines()
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                let r = &v["record"];
                format!("{} {} {} {} {}", r["scanner"], r["round"], r["response_id"], r["source_field"], r["token"])
            })
            .collect()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = fixture_config();
    for d in [a.path(), b.path()] {
        let ledger = Arc::new(Ledger::create(d, &config.campaign_id, config.seed).unwrap());
        run_phase1(&config, &ledger).unwrap();
    }
    let (x, y) = (strip(a.path()), strip(b.path()));
    assert!(!x.is_empty());
    assert_eq!(x, y);
}

#[test]
fn campaign_without_adapters_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = CampaignConfig::from_toml("campaign_id = \"empty\"\nseed = 1\n", dir.path()).unwrap();
    let ledger = Arc::new(Ledger::create(&dir.path().join("c"), "empty", 1).unwrap());
    assert!(run_phase1(&config, &ledger).unwrap().adapters.is_empty());
    run_phase2(&config, &ledger).unwrap();
    let s = summarize(&ledger).unwrap();
    assert_eq!(s.exit_code, 0);
    assert!(s.analysis.rows.is_empty());
}

fn shell_config(dir: &std::path::Path, name: &str, script: &str, timeout: f64, rounds: u32) -> CampaignConfig {
    let mut config = CampaignConfig::from_toml("campaign_id = \"sh\"\nseed = 5\n", dir).unwrap();
    let kind = AdapterKind::Command {
        argv: vec!["sh".into(), "-c".into(), script.into()],
    };
    config.adapters.push(ScannerAdapter::new(name, kind, timeout, rounds).unwrap());
    config
}

#[cfg(unix)]
#[test]
fn scanner_that_never_mentions_a_token_has_no_flows() {
    let dir = tempfile::tempdir().unwrap();
    let config = shell_config(dir.path(), "quiet", "echo '<p>no findings</p>' > {report_path}", 10.0, 3);
    let ledger = Arc::new(Ledger::create(&dir.path().join("c"), "sh", 5).unwrap());
    let p1 = run_phase1(&config, &ledger).unwrap();
    assert_eq!(p1.adapters[0].rounds_completed, 3);
    assert_eq!(p1.adapters[0].flows, 0);
    assert!(run_phase2(&config, &ledger).unwrap().adapters[0].trials.is_empty());
    let s = summarize(&ledger).unwrap();
    assert_eq!((s.analysis.rows[0].tainted, s.analysis.rows[0].vulnerable), (0, 0));
    assert_eq!(s.exit_code, 0);
}

#[cfg(unix)]
#[test]
fn adapter_timeout_skips_only_that_round() {
    let dir = tempfile::tempdir().unwrap();
    let script = "if [ -e {config_dir}/once ]; then echo ok > {report_path}; else touch {config_dir}/once; sleep 5; fi";
    let config = shell_config(dir.path(), "flaky", script, 0.5, 3);
    let ledger = Arc::new(Ledger::create(&dir.path().join("c"), "sh", 5).unwrap());
    let p1 = run_phase1(&config, &ledger).unwrap();
    let a = &p1.adapters[0];
    assert_eq!(a.rounds_completed, 2);
    assert_eq!(a.skipped.len(), 1);
    assert_eq!(a.skipped[0].0, 0);
    assert!(a.skipped[0].1.contains("no report"), "{}", a.skipped[0].1);
}

/// A scan service that fetches the target on trigger and reports the
/// Server header it saw, unescaped.
fn fake_scan_service() -> (String, std::thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let seen: Arc<Mutex<BTreeMap<String, String>>> = Arc::default();
    let h = std::thread::spawn(move || {
        for stream in listener.incoming().take(8) {
            let mut stream = stream.unwrap();
            let mut line = String::new();
            BufReader::new(&stream).read_line(&mut line).unwrap();
            let path = line.split(' ').nth(1).unwrap().to_string();
            let url = url::Url::parse(&format!("http://svc{path}")).unwrap();
            let target = url.query_pairs().find(|(k, _)| k == "u").unwrap().1.into_owned();
            let body = if url.path() == "/scan" {
                let r = get(&target, Duration::from_secs(5)).unwrap();
                let server = r.header("server").unwrap_or("").to_string();
                seen.lock().unwrap().insert(target, server);
                "queued".to_string()
            } else {
                let server = seen.lock().unwrap().get(&target).cloned().unwrap_or_default();
                format!("<html><body><table><tr><td>{server}</td></tr></table></body></html>")
            };
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (base, h)
}

#[test]
fn http_api_adapter_runs_both_phases() {
    let dir = tempfile::tempdir().unwrap();
    let (base, service) = fake_scan_service();
    let mut config = CampaignConfig::from_toml("campaign_id = \"api\"\nseed = 9\n", dir.path()).unwrap();
    let kind = AdapterKind::HttpApi {
        trigger_url: format!("{base}/scan?u={{target}}"),
        report_url: format!("{base}/report?u={{target}}"),
    };
    config.adapters.push(ScannerAdapter::new("api", kind, 10.0, 3).unwrap());
    let ledger = Arc::new(Ledger::create(&dir.path().join("c"), "api", 9).unwrap());
    let p1 = run_phase1(&config, &ledger).unwrap();
    assert_eq!(p1.adapters[0].rounds_completed, 3);
    let p2 = run_phase2(&config, &ledger).unwrap();
    let s = summarize(&ledger).unwrap();
    let row = &s.analysis.rows[0];
    let server_seen = p1.adapters[0].tainted_fields.contains(&revstrike::field::FieldId::Server);
    // Server carries a token in most sampled responses; three rounds suffice.
    assert!(server_seen);
    assert_eq!(row.tainted, 1);
    assert_eq!(row.vulnerable, row.tainted);
    assert_eq!(p2.adapters[0].trials.len(), row.tainted);
    drop(service);
}
