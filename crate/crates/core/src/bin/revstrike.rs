use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use revstrike::grammar::{builtin_grammar, Pcfg, BUILTIN_GRAMMAR_TEXT};
use revstrike::ledger::{audit, derive_seed, Ledger, Token};
use revstrike::orchestrator::{
    analyze_and_write, run_phase1, run_phase2, summarize, CampaignConfig, RESPONSIBLE_USE_NOTICE,
};
use revstrike::payload::{builtin_payloads, load_payloads, payload_table, payloads_to_toml, Payload};
use revstrike::stub::{serve, StubMode};

type Error = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(version, about = "Black-box XSS testing of network scanning systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct CampaignArg {
    /// Campaign directory.
    #[arg(long, env = "REVSTRIKE_CAMPAIGN_DIR")]
    campaign: PathBuf,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Campaign config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Campaign directory.
    #[arg(long, env = "REVSTRIKE_CAMPAIGN_DIR")]
    campaign: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Phase1,
    Phase2,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the stub in the foreground until killed.
    Serve {
        #[arg(long, value_enum)]
        mode: Mode,
        /// `builtin` or a grammar file.
        #[arg(long, default_value = "builtin")]
        grammar: String,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, env = "REVSTRIKE_CAMPAIGN_DIR")]
        campaign: PathBuf,
        /// Master seed for a new campaign; an existing manifest wins.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "campaign")]
        campaign_id: String,
        #[arg(long, required_if_eq("mode", "phase2"))]
        response_id: Option<String>,
        #[arg(long, required_if_eq("mode", "phase2"))]
        token: Option<String>,
        /// Payload id.
        #[arg(long, required_if_eq("mode", "phase2"))]
        payload: Option<String>,
        /// Payload file; builtin list when absent.
        #[arg(long)]
        payloads: Option<PathBuf>,
    },
    /// Phase 1 for every adapter in the config.
    Phase1(ConfigArgs),
    /// Phase 2 for every tainted (scanner, field).
    Phase2(ConfigArgs),
    /// Phase 1, Phase 2, analysis and summary in one go.
    Run(ConfigArgs),
    /// Detect flows in all Phase-1 reports and write statistics.
    Analyze {
        #[command(flatten)]
        campaign: CampaignArg,
        /// Import an externally produced report as SCANNER=PATH (repeatable).
        #[arg(long = "report", value_name = "SCANNER=PATH")]
        reports: Vec<String>,
    },
    /// Verify hash chains and cross-references.
    Audit(CampaignArg),
    /// Print the Name/T/V table; exit 2 when anything is vulnerable.
    Summarize(CampaignArg),
    /// Payload database.
    Payloads {
        #[command(subcommand)]
        action: PayloadCmd,
    },
    /// Response grammar.
    Grammar {
        #[command(subcommand)]
        action: GrammarCmd,
    },
}

#[derive(Subcommand)]
enum PayloadCmd {
    List {
        #[arg(long)]
        file: Option<PathBuf>,
    },
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GrammarCmd {
    /// Write the builtin grammar in text form.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a grammar file.
    Check { file: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("revstrike: {e}");
            ExitCode::FAILURE
        }
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn open_campaign(args: &ConfigArgs) -> Result<(CampaignConfig, Arc<Ledger>), Error> {
    let config = CampaignConfig::load(&args.config)?;
    let ledger = Ledger::create(&args.campaign, &config.campaign_id, config.seed)?;
    if ledger.campaign_id() != config.campaign_id || ledger.manifest().master_seed != config.seed {
        log::warn!(
            "campaign directory holds {} (seed {}); its manifest takes precedence",
            ledger.campaign_id(),
            ledger.manifest().master_seed
        );
    }
    eprintln!("{RESPONSIBLE_USE_NOTICE}");
    Ok((config, Arc::new(ledger)))
}

fn load_payload_list(file: Option<&Path>) -> Result<Vec<Payload>, Error> {
    Ok(match file {
        Some(f) => load_payloads(f)?,
        None => builtin_payloads(),
    })
}

fn run(cmd: Cmd) -> Result<ExitCode, Error> {
    match cmd {
        Cmd::Serve {
            mode,
            grammar,
            bind,
            campaign,
            seed,
            campaign_id,
            response_id,
            token,
            payload,
            payloads,
        } => {
            let ledger = Arc::new(Ledger::create(&campaign, &campaign_id, seed)?);
            eprintln!("{RESPONSIBLE_USE_NOTICE}");
            let mode = match mode {
                Mode::Phase1 => {
                    let g = if grammar == "builtin" {
                        builtin_grammar()
                    } else {
                        Pcfg::from_text(&std::fs::read_to_string(&grammar)?)?.with_epsilon_closure()
                    };
                    if let Some(v) = g.validate().first() {
                        return Err(format!("grammar is invalid: {v}").into());
                    }
                    let label = format!("serve/{}", ledger.responses().len());
                    StubMode::Phase1 {
                        grammar: Arc::new(g),
                        seed: derive_seed(ledger.manifest().master_seed, &label),
                    }
                }
                Mode::Phase2 => {
                    let id = payload.expect("required by clap");
                    let payload = load_payload_list(payloads.as_deref())?
                        .into_iter()
                        .find(|p| p.payload_id == id)
                        .ok_or_else(|| format!("unknown payload {id}"))?;
                    StubMode::Phase2 {
                        response_id: response_id.expect("required by clap"),
                        target_token: Token::parse(&token.expect("required by clap"))?,
                        payload,
                    }
                }
            };
            let stub = serve(bind.as_str(), mode, ledger)?;
            eprintln!("serving on {}", stub.url());
            loop {
                std::thread::park();
            }
        }
        Cmd::Phase1(args) => {
            let (config, ledger) = open_campaign(&args)?;
            for a in run_phase1(&config, &ledger)?.adapters {
                println!(
                    "{}: {} rounds, {} skipped, {} flows, fields {:?}",
                    a.name,
                    a.rounds_completed,
                    a.skipped.len(),
                    a.flows,
                    a.tainted_fields
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Phase2(args) => {
            let (config, ledger) = open_campaign(&args)?;
            for a in run_phase2(&config, &ledger)?.adapters {
                println!("{}: {} trials, {} confirmed", a.name, a.trials.len(), a.vulns.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run(args) => {
            let (config, ledger) = open_campaign(&args)?;
            run_phase1(&config, &ledger)?;
            run_phase2(&config, &ledger)?;
            analyze_and_write(&ledger)?;
            let s = summarize(&ledger)?;
            print!("{}", s.table);
            Ok(ExitCode::from(s.exit_code as u8))
        }
        Cmd::Analyze { campaign, reports } => {
            let ledger = Ledger::open(&campaign.campaign)?;
            for (i, spec) in reports.iter().enumerate() {
                let (scanner, path) = spec
                    .split_once('=')
                    .ok_or_else(|| format!("--report expects SCANNER=PATH, got {spec}"))?;
                let content = std::fs::read(path)?;
                if content.is_empty() {
                    return Err(format!("{path}: empty report").into());
                }
                ledger.save_artifact(scanner, 1, i as u32, "import", &content)?;
            }
            let a = analyze_and_write(&ledger)?;
            print!("{}", a.table());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Audit(c) => {
            let report = audit(&c.campaign)?;
            println!("{report}");
            Ok(if report.is_clean() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Summarize(c) => {
            let ledger = Ledger::open(&c.campaign)?;
            let s = summarize(&ledger)?;
            print!("{}", s.table);
            Ok(ExitCode::from(s.exit_code as u8))
        }
        Cmd::Payloads { action } => {
            match action {
                PayloadCmd::List { file } => print!("{}", payload_table(&load_payload_list(file.as_deref())?)),
                PayloadCmd::Export { out } => write_out(out.as_deref(), &payloads_to_toml(&builtin_payloads()))?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Grammar { action } => match action {
            GrammarCmd::Export { out } => {
                write_out(out.as_deref(), BUILTIN_GRAMMAR_TEXT)?;
                Ok(ExitCode::SUCCESS)
            }
            GrammarCmd::Check { file } => {
                let g = Pcfg::from_text(&std::fs::read_to_string(&file)?)?.with_epsilon_closure();
                let violations = g.validate();
                for v in &violations {
                    println!("{v}");
                }
                println!(
                    "{}: {} productions, {} violation(s)",
                    file.display(),
                    g.productions().len(),
                    violations.len()
                );
                Ok(if violations.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
            }
        },
    }
}
