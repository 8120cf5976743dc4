//! Report analysis: tainted-flow detection, static exploit confirmation and
//! campaign statistics.

mod correlation;
mod static_check;
mod stats;

pub use correlation::{correlation_matrix, phi, CorrelationError, CorrelationMatrix, Indicators};
pub use static_check::{check_exploit_static, CheckError, Reason, StaticVerdict, MIN_TRUNCATED_PREFIX};
pub use stats::{
    field_stats, scanner_table, write_analysis, Analysis, FieldCounts, FieldStats, ScannerRow,
};

use crate::ledger::{Ledger, ReportArtifact, Sink, TaintedFlow, TOKEN_LEN};

/// One flow per occurrence of a ledger token in `report`.
pub fn find_tainted_flows(report: &ReportArtifact, ledger: &Ledger) -> Vec<TaintedFlow> {
    ledger
        .match_tokens(&report.content)
        .into_iter()
        .filter_map(|m| {
            let (response_id, field) = ledger.lookup_by_token(&m.token)?;
            let sink = Sink::new(&report.artifact_id, &report.content, m.offset, TOKEN_LEN);
            Some(TaintedFlow::new(
                &report.scanner,
                m.token,
                field,
                &response_id,
                sink,
                report.round,
            ))
        })
        .collect()
}
