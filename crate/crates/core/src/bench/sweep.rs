//! Single runs and seeded sweeps over parameter grids.
//!
//! Runs execute on a rayon pool. Each run writes only its own trace file;
//! the summary, best-cell and gap-series files are written once, after every
//! run has finished, in a fixed order that does not depend on scheduling.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::baselines::{baseline_initial_point, run_baseline, BaselineAlgorithm};
use crate::bench::config::{Cell, CoveringConfig, RunConfig};
use crate::bench::csvio::{write_summary_file, write_trace_file, SummaryRow};
use crate::bench::metrics::{BilevelOracle, OracleReport};
use crate::bench::report::{aggregate, best_cells, write_aggregates, CellAggregate};
use crate::covering::{Covering, CoveringMethod};
use crate::problem::ProblemSpec;
use crate::solver::{initial_point, solve, IterationTrace};
use crate::{Error, Result};

/// Coverings needed by a set of cells, keyed by the cell's size override.
#[derive(Debug, Clone)]
pub struct CoveringCache {
    entries: Vec<(Option<usize>, Covering)>,
}

impl CoveringCache {
    pub fn build(p: &ProblemSpec, cfg: &CoveringConfig, cells: &[Cell]) -> Result<Self> {
        let mut entries: Vec<(Option<usize>, Covering)> = Vec::new();
        for cell in cells {
            if let Cell::DivideBlo { k, .. } = cell {
                if entries.iter().all(|(key, _)| key != k) {
                    entries.push((*k, cfg.build(&p.y_domain, *k)?));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, k: Option<usize>) -> Result<&Covering> {
        self.entries
            .iter()
            .find(|(key, _)| *key == k)
            .map(|(_, c)| c)
            .ok_or_else(|| Error::Config(format!("no covering prepared for k = {k:?}")))
    }
}

fn default_covering_config() -> CoveringConfig {
    CoveringConfig {
        method: CoveringMethod::Grid,
        points_per_dim: None,
        k: None,
        seed: 0,
    }
}

/// Runs one cell from its seeded initial point.
pub fn execute_run(p: &ProblemSpec, coverings: &CoveringCache, cell: &Cell) -> Result<IterationTrace> {
    match cell {
        Cell::DivideBlo { solver, k } => {
            let c = coverings.get(*k)?;
            let (x0, p0) = initial_point(p, c, solver.seed)?;
            solve(p, c, solver, &x0, &p0)
        }
        Cell::Baseline(b) => {
            let (x0, y0) = baseline_initial_point(p, b.seed);
            run_baseline(p, b, &x0, &y0)
        }
    }
}

/// Summary row with the cell columns filled and the outcome left empty.
pub fn cell_row(cell: &Cell, coverings: &CoveringCache) -> SummaryRow {
    let mut row = SummaryRow {
        algorithm: cell.algorithm().to_string(),
        gamma: None,
        alpha: None,
        eta1: None,
        eta2: None,
        lambda: None,
        k: None,
        seed: cell.seed(),
        iters: None,
        violation: None,
        total_gap: None,
        status: String::new(),
    };
    match cell {
        Cell::DivideBlo { solver, k } => {
            row.gamma = Some(solver.gamma);
            row.alpha = Some(solver.alpha.to_string());
            row.lambda = Some(solver.lambda);
            row.k = coverings.get(*k).ok().map(Covering::k).or(*k);
        }
        Cell::Baseline(b) => {
            if b.algorithm == BaselineAlgorithm::Vpbgd {
                row.gamma = Some(b.gamma);
            }
            row.eta1 = Some(b.eta1);
            row.eta2 = Some(b.eta2);
        }
    }
    row
}

/// Fills the outcome columns of a row.
pub fn complete_row(mut row: SummaryRow, outcome: &Result<(IterationTrace, OracleReport)>) -> SummaryRow {
    match outcome {
        Ok((trace, report)) => {
            row.iters = Some(trace.iterations());
            row.violation = Some(report.violation);
            row.total_gap = Some(report.total_gap);
            row.status = trace.status.to_string();
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

/// Result of `solve`: the run, its metrics and its summary row.
#[derive(Debug)]
pub struct SingleRun {
    pub trace: IterationTrace,
    pub report: OracleReport,
    pub row: SummaryRow,
    pub oracle: BilevelOracle,
    pub cell: Cell,
}

/// Runs the `solver` or `baseline` section once and writes `trace.csv` and
/// a one-row `summary.csv` to `out_dir`.
pub fn run_single(cfg: &RunConfig, seed: Option<u64>, out_dir: &Path) -> Result<SingleRun> {
    let p = cfg.problem.build()?;
    let mut cell = cfg.single_cell()?;
    if let Some(s) = seed {
        cell = cell.with_seed(s);
    }
    let coverings = match &cell {
        Cell::DivideBlo { .. } => CoveringCache::build(&p, cfg.covering_config()?, std::slice::from_ref(&cell))?,
        Cell::Baseline(_) => CoveringCache { entries: vec![] },
    };
    let oracle = BilevelOracle::new(&p, cfg.metrics.grid_per_dim)?;
    let trace = execute_run(&p, &coverings, &cell)?;
    let report = oracle.report(&trace)?;
    std::fs::create_dir_all(out_dir)?;
    write_trace_file(&out_dir.join("trace.csv"), &trace, p.n(), p.m())?;
    let row = complete_row(cell_row(&cell, &coverings), &Ok((trace.clone(), report.clone())));
    write_summary_file(&out_dir.join("summary.csv"), std::slice::from_ref(&row))?;
    Ok(SingleRun {
        trace,
        report,
        row,
        oracle,
        cell,
    })
}

/// Files and tables produced by [`run_sweep`].
#[derive(Debug)]
pub struct SweepOutput {
    pub rows: Vec<SummaryRow>,
    pub aggregates: Vec<CellAggregate>,
    pub best: Vec<CellAggregate>,
    pub summary_path: PathBuf,
    pub trace_dir: PathBuf,
}

struct JobResult {
    row: SummaryRow,
    gaps: Option<Vec<(usize, f64)>>,
}

/// One sweep run: solve, write the trace, score it. Errors end up in the
/// row's status.
fn run_job(
    p: &ProblemSpec,
    coverings: &CoveringCache,
    oracle: &BilevelOracle,
    cell: &Cell,
    stride: usize,
    trace_dir: &Path,
) -> JobResult {
    let outcome = execute_run(p, coverings, cell).and_then(|trace| {
        write_trace_file(&trace_dir.join(trace_file_name(cell)), &trace, p.n(), p.m())?;
        let report = oracle.report(&trace)?;
        let gaps = oracle.gap_series(&trace, stride)?;
        Ok((trace, report, gaps))
    });
    let (outcome, gaps) = match outcome {
        Ok((t, r, g)) => (Ok((t, r)), Some(g)),
        Err(e) => {
            warn!("{} failed: {e}", trace_file_name(cell));
            (Err(e), None)
        }
    };
    JobResult {
        row: complete_row(cell_row(cell, coverings), &outcome),
        gaps,
    }
}

fn trace_file_name(cell: &Cell) -> String {
    format!("{}_seed-{}.csv", cell.label(), cell.seed())
}

/// Runs every cell of the `sweep` section for every seed.
///
/// Writes `traces/<cell>_seed-<seed>.csv` per run, then `summary.csv`,
/// `cells.csv` (per-cell aggregates), `best_cells.csv` (lowest mean total
/// gap per algorithm) and `gap_series.csv` (mean total gap against
/// iteration for each best cell). A failing run becomes a summary row with
/// status `error: ...`.
pub fn run_sweep(cfg: &RunConfig, out_dir: &Path, workers: Option<usize>) -> Result<SweepOutput> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `sweep` section".into()))?;
    let cells = sweep.cells()?;
    let seeds = sweep.seed_list();
    let p = cfg.problem.build()?;
    let covering_cfg = cfg.covering.clone().unwrap_or_else(default_covering_config);
    let coverings = CoveringCache::build(&p, &covering_cfg, &cells)?;
    info!("building metrics oracle at {} points per dimension", cfg.metrics.grid_per_dim);
    let oracle = BilevelOracle::new(&p, cfg.metrics.grid_per_dim)?;
    info!("f* = {}, C_f = {}", oracle.f_star, oracle.c_f);

    let trace_dir = out_dir.join("traces");
    std::fs::create_dir_all(&trace_dir)?;
    let jobs: Vec<Cell> = cells
        .iter()
        .flat_map(|c| seeds.iter().map(move |s| c.with_seed(*s)))
        .collect();
    info!("{} cells x {} seeds = {} runs", cells.len(), seeds.len(), jobs.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.or(sweep.workers).unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let stride = sweep.gap_stride;
    let results: Vec<JobResult> = pool.install(|| {
        jobs.par_iter()
            .map(|cell| run_job(&p, &coverings, &oracle, cell, stride, &trace_dir))
            .collect()
    });

    let rows: Vec<SummaryRow> = results.iter().map(|r| r.row.clone()).collect();
    let summary_path = out_dir.join("summary.csv");
    write_summary_file(&summary_path, &rows)?;
    let aggregates = aggregate(&rows);
    write_aggregates(std::fs::File::create(out_dir.join("cells.csv"))?, &aggregates)?;
    let best = best_cells(&aggregates);
    write_aggregates(std::fs::File::create(out_dir.join("best_cells.csv"))?, &best)?;
    write_gap_series(&out_dir.join("gap_series.csv"), &best, &results)?;
    Ok(SweepOutput {
        rows,
        aggregates,
        best,
        summary_path,
        trace_dir,
    })
}

/// Mean total gap across the completed runs of each best cell at every
/// checkpoint `t`. A run that stopped before `t` contributes its final gap.
fn write_gap_series(path: &Path, best: &[CellAggregate], results: &[JobResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "t", "mean_total_gap", "runs"])?;
    for cell in best {
        let series: Vec<&Vec<(usize, f64)>> = results
            .iter()
            .filter(|r| r.row.cell_key() == cell.key)
            .filter_map(|r| r.gaps.as_ref())
            .filter(|g| !g.is_empty())
            .collect();
        let mut ts: Vec<usize> = series.iter().flat_map(|s| s.iter().map(|(t, _)| *t)).collect();
        ts.sort_unstable();
        ts.dedup();
        for t in ts {
            let values: Vec<f64> = series
                .iter()
                .map(|s| {
                    s.iter()
                        .take_while(|(tc, _)| *tc <= t)
                        .last()
                        .map_or(s[0].1, |(_, g)| *g)
                })
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            w.write_record([
                cell.algorithm().to_string(),
                t.to_string(),
                mean.to_string(),
                values.len().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
