//! Reading `summary.csv` back and aggregating it per cell.

use std::io::{Read, Write};
use std::path::Path;

use crate::bench::csvio::{fmt_opt, SummaryRow, SUMMARY_HEADER};
use crate::{Error, Result};

/// Violation above which a run counts as stuck at a non-global lower-level
/// point.
pub const VIOLATION_THRESHOLD: f64 = 0.1;

fn parse_opt<T: std::str::FromStr>(field: &str, name: &str) -> std::result::Result<Option<T>, String> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| format!("column `{name}`: cannot parse {field:?}"))
}

fn parse_row(rec: &csv::StringRecord) -> std::result::Result<SummaryRow, String> {
    if rec.len() != SUMMARY_HEADER.len() {
        return Err(format!("expected {} fields, found {}", SUMMARY_HEADER.len(), rec.len()));
    }
    let algorithm = rec[0].to_string();
    if algorithm.is_empty() {
        return Err("column `algorithm` is empty".into());
    }
    let status = rec[11].to_string();
    if status.is_empty() {
        return Err("column `status` is empty".into());
    }
    let seed = parse_opt(&rec[7], "seed")?.ok_or("column `seed` is empty")?;
    let row = SummaryRow {
        algorithm,
        gamma: parse_opt(&rec[1], "gamma")?,
        alpha: (!rec[2].is_empty()).then(|| rec[2].to_string()),
        eta1: parse_opt(&rec[3], "eta1")?,
        eta2: parse_opt(&rec[4], "eta2")?,
        lambda: parse_opt(&rec[5], "lambda")?,
        k: parse_opt(&rec[6], "k")?,
        seed,
        iters: parse_opt(&rec[8], "iters")?,
        violation: parse_opt(&rec[9], "violation")?,
        total_gap: parse_opt(&rec[10], "total_gap")?,
        status,
    };
    if let Some(a) = &row.alpha {
        if a != "auto" && a.parse::<f64>().is_err() {
            return Err(format!("column `alpha`: cannot parse {a:?}"));
        }
    }
    if !row.failed() && (row.violation.is_none() || row.total_gap.is_none()) {
        return Err("completed run without violation or total_gap".into());
    }
    Ok(row)
}

/// Parses a summary, reporting every malformed row (1-based, header is
/// row 1) in a single error.
pub fn read_summary<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(SUMMARY_HEADER.iter().copied()) {
        return Err(Error::MalformedSummary {
            row: 1,
            message: format!("header must be {:?}, found {:?}", SUMMARY_HEADER, header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    let mut problems: Vec<(usize, String)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        match rec.map_err(|e| e.to_string()).and_then(|r| parse_row(&r)) {
            Ok(r) => rows.push(r),
            Err(msg) => problems.push((line, msg)),
        }
    }
    if let Some((first, _)) = problems.first() {
        let message = problems
            .iter()
            .map(|(row, msg)| format!("row {row}: {msg}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::MalformedSummary { row: *first, message });
    }
    Ok(rows)
}

pub fn read_summary_file(path: &Path) -> Result<Vec<SummaryRow>> {
    read_summary(std::fs::File::open(path)?)
}

/// Statistics over the runs of one cell. Failed runs count towards `runs`
/// and `failed` only.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAggregate {
    /// The cell columns of the summary.
    pub key: [String; 7],
    pub runs: usize,
    pub failed: usize,
    pub mean_violation: Option<f64>,
    pub max_violation: Option<f64>,
    pub mean_total_gap: Option<f64>,
    /// Fraction of completed runs with violation above
    /// [`VIOLATION_THRESHOLD`].
    pub frac_violation_gt: Option<f64>,
}

impl CellAggregate {
    pub fn algorithm(&self) -> &str {
        &self.key[0]
    }
}

pub const AGGREGATE_HEADER: [&str; 13] = [
    "algorithm",
    "gamma",
    "alpha",
    "eta1",
    "eta2",
    "lambda",
    "k",
    "runs",
    "failed",
    "mean_violation",
    "max_violation",
    "mean_total_gap",
    "frac_violation_gt_0.1",
];

/// Groups rows by cell in order of first appearance.
pub fn aggregate(rows: &[SummaryRow]) -> Vec<CellAggregate> {
    let mut keys: Vec<[String; 7]> = Vec::new();
    let mut groups: Vec<Vec<&SummaryRow>> = Vec::new();
    for r in rows {
        let key = r.cell_key();
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(key);
                groups.push(vec![r]);
            }
        }
    }
    keys.into_iter()
        .zip(groups)
        .map(|(key, group)| {
            let done: Vec<&SummaryRow> = group.iter().copied().filter(|r| !r.failed()).collect();
            let viol: Vec<f64> = done.iter().filter_map(|r| r.violation).collect();
            let gaps: Vec<f64> = done.iter().filter_map(|r| r.total_gap).collect();
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            CellAggregate {
                key,
                runs: group.len(),
                failed: group.len() - done.len(),
                mean_violation: mean(&viol),
                max_violation: viol.iter().copied().reduce(f64::max),
                mean_total_gap: mean(&gaps),
                frac_violation_gt: (!viol.is_empty())
                    .then(|| viol.iter().filter(|v| **v > VIOLATION_THRESHOLD).count() as f64 / viol.len() as f64),
            }
        })
        .collect()
}

/// Per algorithm, the cell with the lowest mean total gap (first in order
/// on ties). Cells without completed runs are skipped.
pub fn best_cells(aggregates: &[CellAggregate]) -> Vec<CellAggregate> {
    let mut best: Vec<CellAggregate> = Vec::new();
    for a in aggregates {
        let Some(gap) = a.mean_total_gap else { continue };
        match best.iter_mut().find(|b| b.algorithm() == a.algorithm()) {
            Some(b) => {
                if gap < b.mean_total_gap.expect("only cells with a gap are kept") {
                    *b = a.clone();
                }
            }
            None => best.push(a.clone()),
        }
    }
    best
}

pub fn write_aggregates<W: Write>(out: W, aggregates: &[CellAggregate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for a in aggregates {
        let mut rec = a.key.to_vec();
        rec.extend([
            a.runs.to_string(),
            a.failed.to_string(),
            fmt_opt(a.mean_violation),
            fmt_opt(a.max_violation),
            fmt_opt(a.mean_total_gap),
            fmt_opt(a.frac_violation_gt),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a summary and returns its per-cell aggregates.
pub fn emit_report(summary: &Path) -> Result<Vec<CellAggregate>> {
    Ok(aggregate(&read_summary_file(summary)?))
}
