use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wsn_secagg::scenario::{emit_report, parse_config, run_sweep, Report, ReportFormat, ScenarioConfig};
use wsn_secagg::sim::Simulation;

#[derive(Parser)]
#[command(version, about = "Secure max-aggregation sensor network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write runs.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace all seeds with streams derived from this master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        security: Option<Switch>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write trace.ndjson.
        #[arg(long)]
        trace: bool,
        /// Also run with security off on the same seeds and report the overhead.
        #[arg(long)]
        paired: bool,
    },
    /// Vary one config field over a list of values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one scenario and write the per-event trace.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn out_dir(flag: Option<PathBuf>, cfg: &ScenarioConfig) -> Result<PathBuf> {
    let dir = flag.or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
    Ok(dir)
}

fn write_reports(report: &Report, dir: &Path) -> Result<()> {
    emit_report(report, ReportFormat::Csv, &dir.join("runs.csv"))?;
    emit_report(report, ReportFormat::Json, &dir.join("summary.json"))?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| format!("creating {}: {e}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            security,
            out,
            trace,
            paired,
        } => {
            let mut cfg = parse_config(&config)?;
            if let Some(s) = seed {
                cfg = cfg.with_master_seed(s);
            }
            if let Some(s) = security {
                cfg.security_enabled = matches!(s, Switch::On);
            }
            let dir = out_dir(out, &cfg)?;
            let mut sim = Simulation::new(cfg.clone())?;
            if trace || cfg.output.trace {
                sim.set_trace(create(&dir.join("trace.ndjson"))?);
            }
            let metrics = sim.run()?;
            let baseline = if paired && cfg.security_enabled {
                let mut off = cfg.clone();
                off.security_enabled = false;
                Some(Simulation::new(off)?.run()?)
            } else {
                None
            };
            write_reports(&Report::single(cfg, &metrics, baseline.as_ref()), &dir)?;
            println!(
                "detection {:.3}  fp {:.3}  fn {:.3}  delivery {:.4}  energy {:.3} J  -> {}",
                metrics.detection_rate,
                metrics.fp_rate,
                metrics.fn_rate,
                metrics.delivery_ratio,
                metrics.energy_total_j,
                dir.display()
            );
        }
        Command::Sweep {
            config,
            axis,
            values,
            reps,
            out,
        } => {
            let cfg = parse_config(&config)?;
            let report = run_sweep(&cfg, &axis, &values, reps)?;
            let dir = out_dir(out, &cfg)?;
            write_reports(&report, &dir)?;
            println!("{} runs -> {}", report.rows.len(), dir.display());
        }
        Command::Trace { config, out } => {
            let cfg = parse_config(&config)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let mut sim = Simulation::new(cfg)?;
            sim.set_trace(create(&out)?);
            sim.run()?;
        }
    }
    Ok(())
}
