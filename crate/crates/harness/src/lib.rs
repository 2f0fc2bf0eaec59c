//! Experiment harness for the `ssrgd` crate: TOML experiment plans, a
//! parallel cell runner with CSV/JSON persistence, log-log scaling fits and
//! SVG plots.

pub mod config;
pub mod diagnose;
pub mod error;
pub mod plots;
pub mod runner;
pub mod scaling;
pub mod trace_csv;

pub use config::{parse_config, parse_config_str, Cell, ExperimentPlan};
pub use error::{HarnessError, Result};
pub use plots::emit_plots;
pub use runner::{run_plan, worker_count, Aggregate, CellSummary, WORKERS_ENV};
pub use scaling::{scaling_report, Axis, ScalingReport};
