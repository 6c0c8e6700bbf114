//! Scenario configuration, experiment orchestration and reporting.

mod config;
mod experiment;
mod metrics;
mod report;
mod sweep;

pub use config::{parse_config, ConfigError, OutputSettings, RadioSettings, ScenarioConfig, Seeds};
pub use experiment::run_experiment;
pub use metrics::{DropCounts, MessageCounts, NodeReport, RunMetrics};
pub use report::{emit_report, Report, ReportError, ReportFormat, RunRow, Stat, CellSummary, RUN_COLUMNS};
pub use sweep::{apply_axis, run_sweep, SweepError, SWEEP_AXES};
