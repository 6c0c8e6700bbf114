use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::scenario::{RunMetrics, ScenarioConfig};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("writing {path}: {message}")]
    Encode { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Column order of `runs.csv`. Stable; new columns are only ever appended.
pub const RUN_COLUMNS: &[&str] = &[
    "axis",
    "axis_value",
    "repetition",
    "seed_topology",
    "seed_field",
    "seed_adversary",
    "seed_loss",
    "security_enabled",
    "node_count",
    "compromised_count",
    "component_count",
    "mean_degree",
    "msgs_estimate",
    "msgs_poll_request",
    "msgs_poll_reply",
    "msgs_isolation_notice",
    "msgs_total",
    "deliveries_attempted",
    "deliveries_received",
    "drop_loss",
    "drop_buffer",
    "drop_dead",
    "drop_isolation",
    "delivery_ratio",
    "energy_total_j",
    "energy_tx_j",
    "energy_rx_j",
    "energy_sense_j",
    "dead_nodes",
    "estimate_rmse",
    "estimate_max_abs_error",
    "converged_fraction",
    "true_positives",
    "false_positives",
    "false_negatives",
    "detection_rate",
    "fp_rate",
    "fn_rate",
    "mean_time_to_detection_s",
    "polls_opened",
    "verdicts_malicious",
    "verdicts_benign",
    "verdicts_inconclusive",
    "tainted_broadcasts",
    "baseline_msgs_total",
    "baseline_delivery_ratio",
    "baseline_energy_total_j",
    "energy_overhead_pct",
];

/// One line of `runs.csv`.
///
/// `delivery_ratio` is frames received divided by frames sent, counted per
/// in-range receiver. The `baseline_*` columns hold the seed-paired run with
/// security disabled, when one was made, and `energy_overhead_pct` is
/// `(E_on - E_off) / E_off * 100` for that pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub axis: String,
    pub axis_value: Option<f64>,
    pub repetition: usize,
    pub seed_topology: u64,
    pub seed_field: u64,
    pub seed_adversary: u64,
    pub seed_loss: u64,
    pub security_enabled: bool,
    pub node_count: usize,
    pub compromised_count: usize,
    pub component_count: usize,
    pub mean_degree: f64,
    pub msgs_estimate: u64,
    pub msgs_poll_request: u64,
    pub msgs_poll_reply: u64,
    pub msgs_isolation_notice: u64,
    pub msgs_total: u64,
    pub deliveries_attempted: u64,
    pub deliveries_received: u64,
    pub drop_loss: u64,
    pub drop_buffer: u64,
    pub drop_dead: u64,
    pub drop_isolation: u64,
    pub delivery_ratio: f64,
    pub energy_total_j: f64,
    pub energy_tx_j: f64,
    pub energy_rx_j: f64,
    pub energy_sense_j: f64,
    pub dead_nodes: usize,
    pub estimate_rmse: f64,
    pub estimate_max_abs_error: f64,
    pub converged_fraction: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub detection_rate: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub mean_time_to_detection_s: Option<f64>,
    pub polls_opened: u64,
    pub verdicts_malicious: u64,
    pub verdicts_benign: u64,
    pub verdicts_inconclusive: u64,
    pub tainted_broadcasts: u64,
    pub baseline_msgs_total: Option<u64>,
    pub baseline_delivery_ratio: Option<f64>,
    pub baseline_energy_total_j: Option<f64>,
    pub energy_overhead_pct: Option<f64>,
}

impl RunRow {
    pub fn new(
        axis: &str,
        axis_value: Option<f64>,
        repetition: usize,
        m: &RunMetrics,
        baseline: Option<&RunMetrics>,
    ) -> Self {
        let overhead = baseline.and_then(|b| {
            (b.energy_total_j > 0.0)
                .then(|| (m.energy_total_j - b.energy_total_j) / b.energy_total_j * 100.0)
        });
        Self {
            axis: axis.to_string(),
            axis_value,
            repetition,
            seed_topology: m.seeds.topology,
            seed_field: m.seeds.field,
            seed_adversary: m.seeds.adversary,
            seed_loss: m.seeds.loss,
            security_enabled: m.security_enabled,
            node_count: m.node_count,
            compromised_count: m.compromised_count,
            component_count: m.component_count,
            mean_degree: m.mean_degree,
            msgs_estimate: m.sent.estimate,
            msgs_poll_request: m.sent.poll_request,
            msgs_poll_reply: m.sent.poll_reply,
            msgs_isolation_notice: m.sent.isolation_notice,
            msgs_total: m.sent.total(),
            deliveries_attempted: m.deliveries_attempted,
            deliveries_received: m.deliveries_received,
            drop_loss: m.dropped.loss,
            drop_buffer: m.dropped.buffer,
            drop_dead: m.dropped.dead,
            drop_isolation: m.dropped.isolation,
            delivery_ratio: m.delivery_ratio,
            energy_total_j: m.energy_total_j,
            energy_tx_j: m.energy_tx_j,
            energy_rx_j: m.energy_rx_j,
            energy_sense_j: m.energy_sense_j,
            dead_nodes: m.dead_nodes,
            estimate_rmse: m.estimate_rmse,
            estimate_max_abs_error: m.estimate_max_abs_error,
            converged_fraction: m.converged_fraction,
            true_positives: m.true_positives,
            false_positives: m.false_positives,
            false_negatives: m.false_negatives,
            detection_rate: m.detection_rate,
            fp_rate: m.fp_rate,
            fn_rate: m.fn_rate,
            mean_time_to_detection_s: m.mean_time_to_detection_s,
            polls_opened: m.polls_opened,
            verdicts_malicious: m.verdicts_malicious,
            verdicts_benign: m.verdicts_benign,
            verdicts_inconclusive: m.verdicts_inconclusive,
            tainted_broadcasts: m.tainted_broadcasts,
            baseline_msgs_total: baseline.map(|b| b.sent.total()),
            baseline_delivery_ratio: baseline.map(|b| b.delivery_ratio),
            baseline_energy_total_j: baseline.map(|b| b.energy_total_j),
            energy_overhead_pct: overhead,
        }
    }
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub stddev: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let stddev = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat {
            mean,
            stddev,
            count: v.len(),
        })
    }
}

/// Aggregates over the repetitions sharing one axis value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub axis_value: Option<f64>,
    pub runs: usize,
    pub detection_rate: Option<Stat>,
    pub fp_rate: Option<Stat>,
    pub fn_rate: Option<Stat>,
    pub delivery_ratio: Option<Stat>,
    pub baseline_delivery_ratio: Option<Stat>,
    pub energy_total_j: Option<Stat>,
    pub baseline_energy_total_j: Option<Stat>,
    pub energy_overhead_pct: Option<Stat>,
    pub estimate_rmse: Option<Stat>,
    pub converged_fraction: Option<Stat>,
    pub mean_time_to_detection_s: Option<Stat>,
    pub msgs_total: Option<Stat>,
}

impl CellSummary {
    pub fn from_rows(axis_value: Option<f64>, rows: &[&RunRow]) -> Self {
        let stat = |f: &dyn Fn(&RunRow) -> Option<f64>| Stat::of(rows.iter().filter_map(|r| f(r)));
        Self {
            axis_value,
            runs: rows.len(),
            detection_rate: stat(&|r| Some(r.detection_rate)),
            fp_rate: stat(&|r| Some(r.fp_rate)),
            fn_rate: stat(&|r| Some(r.fn_rate)),
            delivery_ratio: stat(&|r| Some(r.delivery_ratio)),
            baseline_delivery_ratio: stat(&|r| r.baseline_delivery_ratio),
            energy_total_j: stat(&|r| Some(r.energy_total_j)),
            baseline_energy_total_j: stat(&|r| r.baseline_energy_total_j),
            energy_overhead_pct: stat(&|r| r.energy_overhead_pct),
            estimate_rmse: stat(&|r| Some(r.estimate_rmse)),
            converged_fraction: stat(&|r| Some(r.converged_fraction)),
            mean_time_to_detection_s: stat(&|r| r.mean_time_to_detection_s),
            msgs_total: stat(&|r| Some(r.msgs_total as f64)),
        }
    }
}

/// Everything written for one `run` or `sweep` invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    /// The fully resolved configuration the runs started from.
    pub config: ScenarioConfig,
    pub axis: String,
    pub values: Vec<f64>,
    pub repetitions: usize,
    /// Mean seed-paired energy overhead over all rows that have one.
    pub mean_energy_overhead_pct: Option<f64>,
    pub cells: Vec<CellSummary>,
    pub rows: Vec<RunRow>,
}

impl Report {
    /// Assemble a report; `rows` must be ordered by (axis value, repetition).
    pub fn new(config: ScenarioConfig, axis: &str, values: Vec<f64>, repetitions: usize, rows: Vec<RunRow>) -> Self {
        let mut cells = Vec::new();
        if values.is_empty() {
            if !rows.is_empty() {
                let all: Vec<&RunRow> = rows.iter().collect();
                cells.push(CellSummary::from_rows(None, &all));
            }
        } else {
            for v in &values {
                let cell: Vec<&RunRow> = rows.iter().filter(|r| r.axis_value == Some(*v)).collect();
                cells.push(CellSummary::from_rows(Some(*v), &cell));
            }
        }
        let mean_energy_overhead_pct = Stat::of(rows.iter().filter_map(|r| r.energy_overhead_pct)).map(|s| s.mean);
        Self {
            config,
            axis: axis.to_string(),
            values,
            repetitions,
            mean_energy_overhead_pct,
            cells,
            rows,
        }
    }

    /// Report for a single run, optionally paired with a security-off baseline.
    pub fn single(config: ScenarioConfig, metrics: &RunMetrics, baseline: Option<&RunMetrics>) -> Self {
        let row = RunRow::new("none", None, 0, metrics, baseline);
        Self::new(config, "none", Vec::new(), 1, vec![row])
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write the rows as CSV or the whole report as JSON.
///
/// Output is a pure function of the report, so equal reports give
/// byte-identical files. An empty report still gets the CSV header.
pub fn emit_report(report: &Report, format: ReportFormat, path: &Path) -> Result<(), ReportError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match format {
        ReportFormat::Csv => write_csv(report, &mut out).map_err(|e| ReportError::Encode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?,
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report).map_err(|e| ReportError::Encode {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            out.write_all(b"\n").map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

fn write_csv(report: &Report, out: &mut impl Write) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RUN_COLUMNS)?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
