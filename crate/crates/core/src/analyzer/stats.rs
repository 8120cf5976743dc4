use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::correlation::{correlation_matrix, CorrelationMatrix, Indicators};
use crate::field::FieldId;
use crate::ledger::{TaintedFlow, VulnRecord};

/// Counts for one field. `*_count` are distinct scanners, `*_flows` are
/// individual occurrences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FieldCounts {
    pub field: FieldId,
    pub tainted_count: usize,
    pub vulnerable_count: usize,
    pub tainted_flows: usize,
    pub vulnerable_flows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldStats {
    pub fields: [FieldCounts; FieldId::COUNT],
}

impl FieldStats {
    pub fn get(&self, field: FieldId) -> &FieldCounts {
        &self.fields[field.index()]
    }
}

pub fn field_stats(flows: &[TaintedFlow], vulns: &[VulnRecord]) -> FieldStats {
    let mut fields = FieldId::ALL.map(|field| FieldCounts {
        field,
        tainted_count: 0,
        vulnerable_count: 0,
        tainted_flows: 0,
        vulnerable_flows: 0,
    });
    let tainted: BTreeSet<(&str, FieldId)> =
        flows.iter().map(|f| (f.scanner.as_str(), f.source_field)).collect();
    let vulnerable: BTreeSet<(&str, FieldId)> =
        vulns.iter().map(|v| (v.scanner.as_str(), v.source_field)).collect();
    let vuln_flows: BTreeSet<(&str, FieldId)> =
        vulns.iter().map(|v| (v.flow_id.as_str(), v.source_field)).collect();
    for (_, f) in tainted {
        fields[f.index()].tainted_count += 1;
    }
    for (_, f) in vulnerable {
        fields[f.index()].vulnerable_count += 1;
    }
    for f in flows {
        fields[f.source_field.index()].tainted_flows += 1;
    }
    for (_, f) in vuln_flows {
        fields[f.index()].vulnerable_flows += 1;
    }
    FieldStats { fields }
}

/// One row of the per-scanner results table. `tainted` and `vulnerable`
/// count distinct fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScannerRow {
    pub name: String,
    pub tainted: usize,
    pub vulnerable: usize,
    pub tainted_flows: usize,
    pub vulnerable_flows: usize,
    pub tainted_fields: Vec<FieldId>,
    pub vulnerable_fields: Vec<FieldId>,
}

/// Rows for every scanner in `scanners` or in the data, sorted by name.
pub fn scanner_table(scanners: &[String], flows: &[TaintedFlow], vulns: &[VulnRecord]) -> Vec<ScannerRow> {
    let mut rows: BTreeMap<&str, ScannerRow> = BTreeMap::new();
    let names = scanners
        .iter()
        .map(String::as_str)
        .chain(flows.iter().map(|f| f.scanner.as_str()))
        .chain(vulns.iter().map(|v| v.scanner.as_str()));
    for name in names {
        rows.entry(name).or_insert_with(|| ScannerRow {
            name: name.to_string(),
            tainted: 0,
            vulnerable: 0,
            tainted_flows: 0,
            vulnerable_flows: 0,
            tainted_fields: Vec::new(),
            vulnerable_fields: Vec::new(),
        });
    }
    let mut tainted: BTreeMap<&str, BTreeSet<FieldId>> = BTreeMap::new();
    let mut vulnerable: BTreeMap<&str, BTreeSet<FieldId>> = BTreeMap::new();
    let mut vuln_flows: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for f in flows {
        tainted.entry(&f.scanner).or_default().insert(f.source_field);
        rows.get_mut(f.scanner.as_str()).expect("row").tainted_flows += 1;
    }
    for v in vulns {
        vulnerable.entry(&v.scanner).or_default().insert(v.source_field);
        vuln_flows.entry(&v.scanner).or_default().insert(&v.flow_id);
    }
    for (name, row) in rows.iter_mut() {
        row.tainted_fields = tainted.get(name).map(|s| s.iter().copied().collect()).unwrap_or_default();
        row.vulnerable_fields = vulnerable.get(name).map(|s| s.iter().copied().collect()).unwrap_or_default();
        row.tainted = row.tainted_fields.len();
        row.vulnerable = row.vulnerable_fields.len();
        row.vulnerable_flows = vuln_flows.get(name).map_or(0, BTreeSet::len);
    }
    rows.into_values().collect()
}

/// Everything `analyze` writes for a campaign.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub stats: FieldStats,
    pub rows: Vec<ScannerRow>,
    pub tainted_correlation: Option<CorrelationMatrix>,
    pub vulnerable_correlation: Option<CorrelationMatrix>,
}

impl Analysis {
    pub fn compute(scanners: &[String], flows: &[TaintedFlow], vulns: &[VulnRecord]) -> Analysis {
        let rows = scanner_table(scanners, flows, vulns);
        let tainted: Vec<Indicators> = rows
            .iter()
            .map(|r| Indicators::new(&r.name, r.tainted_fields.iter().copied()))
            .collect();
        let vulnerable: Vec<Indicators> = rows
            .iter()
            .map(|r| Indicators::new(&r.name, r.vulnerable_fields.iter().copied()))
            .collect();
        Analysis {
            stats: field_stats(flows, vulns),
            tainted_correlation: correlation_matrix(&tainted).ok(),
            vulnerable_correlation: correlation_matrix(&vulnerable).ok(),
            rows,
        }
    }

    /// Name / T / V table, one row per scanner.
    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(4);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>3}  {:>3}", "Name", "T", "V");
        for r in &self.rows {
            let _ = writeln!(out, "{:<width$}  {:>3}  {:>3}", r.name, r.tainted, r.vulnerable);
        }
        out
    }

    pub fn any_vulnerable(&self) -> bool {
        self.rows.iter().any(|r| r.vulnerable > 0)
    }
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum StatsLine<'a> {
    Meta { correlation: &'static str, counting: &'static str, scanners: usize },
    Field(&'a FieldCounts),
    Scanner(&'a ScannerRow),
}

pub const STATS_FILE: &str = "stats.ndjson";
pub const TAINTED_CSV: &str = "correlation_tainted.csv";
pub const VULNERABLE_CSV: &str = "correlation_vulnerable.csv";
pub const TABLE_FILE: &str = "table.txt";

/// Writes `stats.ndjson`, both correlation CSVs (when at least two scanners
/// exist) and `table.txt` into `dir`.
pub fn write_analysis(analysis: &Analysis, dir: &Path) -> io::Result<()> {
    let mut ndjson = String::new();
    let mut push = |line: StatsLine<'_>| {
        ndjson.push_str(&serde_json::to_string(&line).expect("stats serialize"));
        ndjson.push('\n');
    };
    push(StatsLine::Meta {
        correlation: "pearson-phi",
        counting: "distinct (scanner, field) pairs; *_flows count occurrences",
        scanners: analysis.rows.len(),
    });
    for f in &analysis.stats.fields {
        push(StatsLine::Field(f));
    }
    for r in &analysis.rows {
        push(StatsLine::Scanner(r));
    }
    std::fs::write(dir.join(STATS_FILE), ndjson)?;
    for (name, m) in [
        (TAINTED_CSV, &analysis.tainted_correlation),
        (VULNERABLE_CSV, &analysis.vulnerable_correlation),
    ] {
        if let Some(m) = m {
            std::fs::write(dir.join(name), m.to_csv())?;
        }
    }
    std::fs::write(dir.join(TABLE_FILE), analysis.table())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{ConfirmMethod, Sink, Token};

    fn flow(scanner: &str, field: FieldId, n: u8) -> TaintedFlow {
        let token = Token::parse(&format!("00000000-0000-4000-8000-0000000000{n:02x}")).unwrap();
        TaintedFlow::new(scanner, token, field, "resp-000000", Sink::new("a", b"x", n as usize, 1), 0)
    }

    #[test]
    fn single_scanner_on_server() {
        let s = field_stats(&[flow("a", FieldId::Server, 1), flow("a", FieldId::Server, 2)], &[]);
        assert_eq!((s.get(FieldId::Server).tainted_count, s.get(FieldId::Server).vulnerable_count), (1, 0));
        assert_eq!(s.get(FieldId::Server).tainted_flows, 2);
        for f in FieldId::ALL.into_iter().filter(|f| *f != FieldId::Server) {
            assert_eq!(s.get(f).tainted_count + s.get(f).vulnerable_count, 0);
        }
    }

    #[test]
    fn table_counts_fields_not_occurrences() {
        let f1 = flow("b", FieldId::Location, 1);
        let f2 = flow("b", FieldId::Location, 2);
        let f3 = flow("b", FieldId::Server, 3);
        let v = VulnRecord::new(&f1, "polyglot", ConfirmMethod::StaticContext, "");
        let a = Analysis::compute(&["a".into()], &[f1, f2, f3], &[v]);
        assert_eq!(a.rows.len(), 2);
        assert_eq!((a.rows[0].name.as_str(), a.rows[0].tainted, a.rows[0].vulnerable), ("a", 0, 0));
        assert_eq!((a.rows[1].tainted, a.rows[1].vulnerable, a.rows[1].tainted_flows), (2, 1, 3));
        assert!(a.any_vulnerable());
        assert_eq!(a.table().lines().count(), 3);
    }

    #[test]
    fn empty_campaign() {
        let a = Analysis::compute(&[], &[], &[]);
        assert_eq!(a.table(), "Name    T    V\n");
        assert!(!a.any_vulnerable());
        assert!(a.tainted_correlation.is_none());
    }
}
