//! Mock scanning system: one GET against the target, one HTML report out.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use revstrike::mock::{run_mock, MockError, MockSpec};

#[derive(Parser)]
#[command(version, about = "Mock scanner with a declared taint topology")]
struct Args {
    /// Mock spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// URL to scan.
    #[arg(long)]
    target: String,
    /// Where to write the HTML report.
    #[arg(long)]
    out: PathBuf,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 10.0)]
    timeout: f64,
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    let result = MockSpec::load(&args.spec).and_then(|spec| {
        run_mock(&spec, &args.target, Duration::from_secs_f64(args.timeout.max(0.001)))
    });
    match result {
        Ok(report) => match std::fs::write(&args.out, &report.content) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("revstrike-mock: {}: {e}", args.out.display());
                ExitCode::FAILURE
            }
        },
        Err(e @ MockError::TargetUnreachable(_)) => {
            eprintln!("revstrike-mock: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("revstrike-mock: {e}");
            ExitCode::FAILURE
        }
    }
}
