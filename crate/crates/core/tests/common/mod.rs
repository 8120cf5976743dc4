#![allow(dead_code)]

use std::path::{Path, PathBuf};

use revstrike::orchestrator::{AdapterKind, CampaignConfig};

pub const MOCK_BIN: &str = env!("CARGO_BIN_EXE_revstrike-mock");

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// The bundled fixture campaign with the mock binary path made absolute.
pub fn fixture_config() -> CampaignConfig {
    let mut config = CampaignConfig::load(&fixtures_dir().join("campaign.toml")).expect("fixture config");
    for a in &mut config.adapters {
        if let AdapterKind::Command { argv } = &mut a.kind {
            argv[0] = MOCK_BIN.to_string();
        }
    }
    config
}

/// Hex-digit-free fill strings that are HTML-inert and contain no CR/LF.
pub fn inert_fill(i: usize) -> String {
    format!("ghijklmnopqrstuvwxyz-{i}")
}

pub struct FixtureRun {
    pub ledger: std::sync::Arc<revstrike::ledger::Ledger>,
    pub phase1: revstrike::orchestrator::Phase1Summary,
    pub phase2: revstrike::orchestrator::Phase2Summary,
    pub summary: revstrike::orchestrator::Summary,
}

/// Runs both phases of the fixture campaign into `dir`.
pub fn run_fixture_campaign(dir: &Path) -> FixtureRun {
    use revstrike::orchestrator::{run_phase1, run_phase2, summarize};
    let config = fixture_config();
    let ledger = std::sync::Arc::new(
        revstrike::ledger::Ledger::create(dir, &config.campaign_id, config.seed).expect("ledger"),
    );
    let phase1 = run_phase1(&config, &ledger).expect("phase 1");
    let phase2 = run_phase2(&config, &ledger).expect("phase 2");
    let summary = summarize(&ledger).expect("summary");
    FixtureRun { ledger, phase1, phase2, summary }
}

/// The topology a fixture mock declares for itself.
pub fn expected_topology(name: &str) -> revstrike::mock::Topology {
    revstrike::mock::MockSpec::load(&fixtures_dir().join(format!("{name}.toml")))
        .expect("mock spec")
        .expected
}
