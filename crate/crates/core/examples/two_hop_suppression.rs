//! Rebroadcast suppression among three nodes.
//!
//! When A, B and C all hear each other, B's update after hearing A tells C
//! nothing new, so B stays quiet. Move C out of A's range and B relays.

use std::collections::BTreeSet;

use wsn_secagg::protocol::{Message, NodeId, NodeState, ProtocolConfig};
use wsn_secagg::{GaussianEstimate, SimTime};

fn network(edges: &[(u32, u32)]) -> Vec<NodeState> {
    let mut adj = vec![BTreeSet::new(); 3];
    for &(a, b) in edges {
        adj[a as usize].insert(NodeId(b));
        adj[b as usize].insert(NodeId(a));
    }
    let start = GaussianEstimate::scalar(25.0, 4.0).unwrap();
    (0..3u32)
        .map(|i| {
            let two_hop = adj[i as usize].iter().map(|m: &NodeId| (*m, adj[m.index()].clone())).collect();
            let mut st = NodeState::new(NodeId(i), adj[i as usize].clone(), two_hop, ProtocolConfig::default());
            st.set_global_estimate(start.clone());
            st.set_last_local_mean(Some(25.0));
            st.set_last_broadcast(Some(start.clone()));
            for m in &adj[i as usize] {
                st.record_neighbor(*m, start.clone(), SimTime::ZERO);
            }
            st
        })
        .collect()
}

fn play(name: &str, edges: &[(u32, u32)]) -> Result<(), Box<dyn std::error::Error>> {
    let mut nodes = network(edges);
    let names = ["A", "B", "C"];
    println!("{name}");
    let mut queue: Vec<Message> = nodes[0].on_sample(28.0, SimTime::ZERO)?;
    let mut t = 1;
    while let Some(msg) = queue.pop() {
        let src = msg.sender();
        println!("  t={t} {} broadcasts", names[src.index()]);
        let hearers: Vec<NodeId> = nodes[src.index()].neighbors().iter().copied().collect();
        for dst in hearers {
            let out = nodes[dst.index()].handle(&msg, SimTime(t))?;
            let est = nodes[dst.index()].global_estimate().unwrap();
            println!(
                "    {} now at {:.3}, {}",
                names[dst.index()],
                est.mean_scalar(),
                if out.is_empty() { "stays quiet" } else { "rebroadcasts" }
            );
            queue.extend(out);
        }
        t += 1;
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    play("triangle A-B-C:", &[(0, 1), (1, 2), (0, 2)])?;
    play("chain A-B-C (C cannot hear A):", &[(0, 1), (1, 2)])
}
