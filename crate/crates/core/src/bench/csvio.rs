//! CSV writers and the summary row type.
//!
//! Floats use Rust's `Display`, the shortest decimal that parses back to the
//! same `f64`. Missing values are empty fields.

use std::io::Write;
use std::path::Path;

use crate::solver::IterationTrace;
use crate::Result;

pub(crate) fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `t, f_gamma, grad_map_norm, feasibility_gap, x_0.., y_induced_0.., wallclock_ms`
pub fn trace_header(n: usize, m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "f_gamma", "grad_map_norm", "feasibility_gap"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..n).map(|i| format!("x_{i}")));
    h.extend((0..m).map(|i| format!("y_induced_{i}")));
    h.push("wallclock_ms".into());
    h
}

pub fn write_trace<W: Write>(out: W, trace: &IterationTrace, n: usize, m: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(n, m))?;
    for r in &trace.rows {
        let mut rec = vec![
            r.t.to_string(),
            r.f_gamma.to_string(),
            r.grad_map_norm.to_string(),
            fmt_opt(r.feasibility_gap),
        ];
        rec.extend(r.x.iter().map(f64::to_string));
        rec.extend(r.y.iter().map(f64::to_string));
        rec.push(fmt_opt(r.wallclock_ms));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, trace: &IterationTrace, n: usize, m: usize) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trace(file, trace, n, m)
}

pub const SUMMARY_HEADER: [&str; 12] = [
    "algorithm",
    "gamma",
    "alpha",
    "eta1",
    "eta2",
    "lambda",
    "k",
    "seed",
    "iters",
    "violation",
    "total_gap",
    "status",
];

/// One line of `summary.csv`. Parameters that do not apply to an algorithm
/// are empty; `alpha` is a number or `auto`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub gamma: Option<f64>,
    pub alpha: Option<String>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub lambda: Option<f64>,
    pub k: Option<usize>,
    pub seed: u64,
    pub iters: Option<usize>,
    pub violation: Option<f64>,
    pub total_gap: Option<f64>,
    /// `converged`, `max_iters` or `error: <message>`.
    pub status: String,
}

impl SummaryRow {
    pub fn failed(&self) -> bool {
        self.status.starts_with("error")
    }

    /// The cell columns, used to group rows.
    pub fn cell_key(&self) -> [String; 7] {
        [
            self.algorithm.clone(),
            fmt_opt(self.gamma),
            self.alpha.clone().unwrap_or_default(),
            fmt_opt(self.eta1),
            fmt_opt(self.eta2),
            fmt_opt(self.lambda),
            fmt_opt(self.k),
        ]
    }

    pub fn record(&self) -> Vec<String> {
        let mut rec = self.cell_key().to_vec();
        rec.extend([
            self.seed.to_string(),
            fmt_opt(self.iters),
            fmt_opt(self.violation),
            fmt_opt(self.total_gap),
            self.status.clone(),
        ]);
        rec
    }
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_file(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_summary(std::io::BufWriter::new(std::fs::File::create(path)?), rows)
}
