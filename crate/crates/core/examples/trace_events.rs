//! Follow one attacker through the event trace.
//!
//! Runs a small deployment with a single compromised node and prints its
//! broadcasts, the polls they trigger, the notices sent after a malicious
//! verdict, and neighbours that isolate it on hearing a notice.

use std::collections::BTreeSet;

use wsn_secagg::protocol::Message;
use wsn_secagg::scenario::ScenarioConfig;
use wsn_secagg::sim::{generate_topology, Simulation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig {
        node_count: 30,
        area_m: [40.0, 40.0],
        simulation_time_s: 5.0,
        ..ScenarioConfig::default()
    };
    let topo = generate_topology(cfg.node_count, (40.0, 40.0), cfg.range_m, 5);
    let attacker = 7usize;
    let mut flags = vec![false; cfg.node_count];
    flags[attacker] = true;

    let mut buf = Vec::new();
    let mut sim = Simulation::with_compromised(cfg, topo, flags)?;
    let neighbours: BTreeSet<u32> = sim.topology().neighbors(wsn_secagg::NodeId(attacker as u32)).iter().map(|n| n.0).collect();
    sim.set_trace(&mut buf);
    let m = sim.run()?;

    println!("attacker {attacker}, neighbours {neighbours:?}");
    for line in String::from_utf8(buf)?.lines() {
        let rec: serde_json::Value = serde_json::from_str(line)?;
        let t = rec["t_ns"].as_u64().unwrap_or(0) as f64 * 1e-9;
        let node = rec["node"].as_u64().unwrap_or(0) as u32;
        let detail = rec["detail"].as_str().unwrap_or_default();
        if rec["event"] == "deliver" && detail.starts_with("kind=IsolationNotice") && neighbours.contains(&node) {
            println!("{t:8.4} s  node {node} hears a notice ({detail})");
        }
        if rec["event"] != "send" {
            continue;
        }
        let msg: Message = serde_json::from_str(detail)?;
        match msg {
            Message::PollRequest { src, suspect, .. } if suspect.index() == attacker => {
                println!("{t:8.4} s  node {} polls its neighbours", src.0)
            }
            Message::IsolationNotice { accuser, suspect } if suspect.index() == attacker => {
                println!("{t:8.4} s  node {} isolates the attacker", accuser.0)
            }
            Message::EstimateBroadcast { src, estimate, .. } if src.index() == attacker => {
                println!("{t:8.4} s  attacker broadcasts {:.2}", estimate.mean_scalar())
            }
            _ => {}
        }
    }
    let report = &m.nodes[attacker];
    println!(
        "isolated by {} of {} neighbours, detected: {}",
        report.isolated_by, report.degree, report.flagged
    );
    Ok(())
}
