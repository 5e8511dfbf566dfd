//! Benchmark harness: configuration, brute-force metrics, sweeps, reports
//! and CSV output.

pub mod config;
pub mod csvio;
pub mod metrics;
pub mod report;
pub mod sweep;

pub use config::{Cell, RunConfig};
pub use metrics::{compute_metrics, BilevelOracle, OracleReport};
pub use report::{emit_report, CellAggregate};
pub use sweep::{run_single, run_sweep, SweepOutput};
