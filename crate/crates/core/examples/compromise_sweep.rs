//! Detection and overhead as the compromised share grows.
//!
//! Each cell pairs every security-on run with a security-off run on the
//! same seeds. Writes `runs.csv` and `summary.json` to the given directory.
//!
//! ```text
//! cargo run --release --example compromise_sweep -- [out_dir] [reps]
//! ```

use std::path::PathBuf;

use wsn_secagg::scenario::{emit_report, run_sweep, ReportFormat, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "out/compromise_sweep".into()));
    let reps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);

    let base = ScenarioConfig::default();
    let report = run_sweep(&base, "compromised_fraction", &[0.0, 0.05, 0.1, 0.15, 0.2], reps)?;

    println!("{:>9} {:>10} {:>10} {:>10} {:>12}", "fraction", "detection", "fp", "fn", "overhead %");
    for cell in &report.cells {
        let f = |s: &Option<wsn_secagg::scenario::Stat>| s.as_ref().map_or(f64::NAN, |s| s.mean);
        println!(
            "{:>9.2} {:>10.3} {:>10.3} {:>10.3} {:>12.1}",
            cell.axis_value.unwrap_or(f64::NAN),
            f(&cell.detection_rate),
            f(&cell.fp_rate),
            f(&cell.fn_rate),
            f(&cell.energy_overhead_pct),
        );
    }

    std::fs::create_dir_all(&dir)?;
    emit_report(&report, ReportFormat::Csv, &dir.join("runs.csv"))?;
    emit_report(&report, ReportFormat::Json, &dir.join("summary.json"))?;
    println!("{} rows written to {}", report.rows.len(), dir.display());
    Ok(())
}
