//! Detection outcome per compromised node in one reference run.
//!
//! A compromised node counts as detected when a strict majority of its
//! alive neighbours has isolated it by the end of the run.
//!
//! ```text
//! cargo run --release --example detect_compromised -- [compromised_fraction] [master_seed]
//! ```

use wsn_secagg::scenario::{run_experiment, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let fraction: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let mut cfg = ScenarioConfig::default().with_master_seed(seed);
    cfg.adversary.compromised_fraction = fraction;
    let m = run_experiment(&cfg)?;

    println!("{:>5} {:>6} {:>8} {:>9} {:>12} {:>10}", "node", "degree", "isolated", "detected", "first notice", "broadcasts");
    for n in m.nodes.iter().filter(|n| n.compromised) {
        println!(
            "{:>5} {:>6} {:>8} {:>9} {:>12} {:>10}",
            n.id,
            n.degree,
            n.isolated_by,
            if n.flagged { "yes" } else { "no" },
            n.first_notice_s.map_or("-".into(), |t| format!("{t:.2} s")),
            n.broadcasts
        );
    }
    let wrongly: Vec<u32> = m.nodes.iter().filter(|n| n.flagged && !n.compromised).map(|n| n.id).collect();
    println!(
        "\ndetection {:.3}  false positives {:?}  mean time to detection {}",
        m.detection_rate,
        wrongly,
        m.mean_time_to_detection_s.map_or("-".into(), |t| format!("{t:.2} s"))
    );
    println!(
        "polls {}  malicious {}  benign {}  notices sent {}",
        m.polls_opened, m.verdicts_malicious, m.verdicts_benign, m.sent.isolation_notice
    );
    Ok(())
}
