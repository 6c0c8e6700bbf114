//! The reference deployment (160 nodes, 120 m x 120 m, 200 s) with and
//! without the security module, on the same seeds.
//!
//! ```text
//! cargo run --release --example table_one_run -- [compromised_fraction] [master_seed]
//! ```

use std::time::Instant;

use wsn_secagg::scenario::{run_experiment, RunMetrics, ScenarioConfig};
use wsn_secagg::sim::Attack;

fn show(label: &str, m: &RunMetrics) {
    println!(
        "{label:>12}: msgs {:>6} (security {:>5})  delivery {:.4}  energy {:8.3} J  \
         detect {:.3} fp {:.3} fn {:.3}  rmse {:.3}  converged {:.3}  dead {}",
        m.sent.total(),
        m.sent.security(),
        m.delivery_ratio,
        m.energy_total_j,
        m.detection_rate,
        m.fp_rate,
        m.fn_rate,
        m.estimate_rmse,
        m.converged_fraction,
        m.dead_nodes,
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let fraction: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.2);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);

    let mut cfg = ScenarioConfig::default().with_master_seed(seed);
    cfg.adversary.compromised_fraction = fraction;
    // ten field standard deviations above the true reading
    cfg.adversary.attack = Attack::ConstantOffset {
        offset_c: 10.0 * cfg.field.base_sigma_c,
    };
    println!(
        "{} nodes, {} compromised, seed {seed}",
        cfg.node_count,
        cfg.compromised_count()
    );

    let t = Instant::now();
    let on = run_experiment(&cfg)?;
    let t_on = t.elapsed();
    cfg.security_enabled = false;
    let off = run_experiment(&cfg)?;

    show("security on", &on);
    show("security off", &off);
    println!(
        "components {}  mean degree {:.2}  polls {}  tainted broadcasts {}  buffer drops {}/{}",
        on.component_count,
        on.mean_degree,
        on.polls_opened,
        on.tainted_broadcasts,
        on.dropped.buffer,
        off.dropped.buffer
    );
    println!(
        "energy overhead {:+.1}%  delivery ratio change {:+.4}  (one run took {:.2?})",
        (on.energy_total_j - off.energy_total_j) / off.energy_total_j * 100.0,
        on.delivery_ratio - off.delivery_ratio,
        t_on
    );
    Ok(())
}
