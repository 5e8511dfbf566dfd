use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use divide_blo::bench::config::{Cell, RunConfig};
use divide_blo::bench::report::{best_cells, write_aggregates};
use divide_blo::bench::{emit_report, run_single, run_sweep};
use divide_blo::solver::{kkt_feasibility_check, rate_certificate};

#[derive(Parser)]
#[command(name = "divide-blo", version, about = "Bilevel optimization with a discretized value-function penalty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the `solver` or `baseline` section once.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Record wall-clock time in the trace (makes it non-reproducible).
        #[arg(long)]
        wallclock: bool,
    },
    /// Run every cell of the `sweep` section for every seed.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: one per core).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print per-cell aggregates of a summary CSV.
    Report {
        #[arg(long)]
        summary: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Solve {
            config,
            seed,
            out,
            wallclock,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if wallclock {
                if let Some(s) = cfg.solver.as_mut() {
                    s.record_wallclock = true;
                }
                if let Some(b) = cfg.baseline.as_mut() {
                    b.record_wallclock = true;
                }
            }
            let run = run_single(&cfg, seed, &out).context("solve failed")?;
            for w in &run.trace.warnings {
                log::warn!("{w}");
            }
            println!("algorithm   {}", run.row.algorithm);
            println!("seed        {}", run.row.seed);
            println!("status      {}", run.trace.status);
            println!("iterations  {}", run.trace.iterations());
            println!("x_T         {:?}", run.trace.final_x);
            println!("y_T         {:?}", run.trace.final_y);
            println!("V(x_T)      {}", run.report.v_of_x);
            println!("violation   {}", run.report.violation);
            println!("f*          {}", run.report.f_star);
            println!("total_gap   {}", run.report.total_gap);
            if let (Cell::DivideBlo { solver, .. }, Some(state)) = (&run.cell, &run.trace.terminal) {
                let p = run.oracle.problem();
                let kkt = kkt_feasibility_check(state, &p.constants, solver);
                println!("feasibility {} <= {} ({:?})", kkt.value, kkt.bound, kkt.verdict);
                let rate = rate_certificate(&run.trace, solver, run.report.c_f)?;
                println!("rate bound  {} <= {} ({:?})", rate.value, rate.bound, rate.verdict);
            }
            println!("wrote {}", out.display());
        }
        Command::Sweep { config, out, workers } => {
            let cfg = RunConfig::load(&config)?;
            let result = run_sweep(&cfg, &out, workers).context("sweep failed")?;
            let failed = result.rows.iter().filter(|r| r.failed()).count();
            println!("{} runs ({failed} failed); summary at {}", result.rows.len(), result.summary_path.display());
            write_aggregates(std::io::stdout().lock(), &result.best)?;
        }
        Command::Report { summary } => {
            let aggregates = emit_report(&summary)?;
            let stdout = std::io::stdout();
            write_aggregates(stdout.lock(), &aggregates)?;
            if !aggregates.is_empty() {
                println!();
                write_aggregates(stdout.lock(), &best_cells(&aggregates))?;
            }
        }
    }
    Ok(())
}
