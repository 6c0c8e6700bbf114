mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{gate_fixture, ids, scalar, Net};
use proptest::prelude::*;
use wsn_secagg::protocol::{
    verdict, BroadcastGate, Message, MessageKind, NodeId, NodeState, PollId, ProtocolConfig, SuspectFusion,
    Verdict,
};
use wsn_secagg::{GaussianEstimate, SimTime};

fn gates() -> [BroadcastGate; 2] {
    [BroadcastGate::PerNeighbor, BroadcastGate::LastSent]
}

#[test]
fn two_hop_suppression_triangle_and_chain() {
    for gate in gates() {
        let cfg = ProtocolConfig {
            gate,
            ..Default::default()
        };
        let start = scalar(25.0, 4.0);

        // A=0, B=1, C=2 all in range of each other: only A transmits.
        let mut tri = Net::new(&[(0, 1), (1, 2), (0, 2)], 3, cfg.clone());
        tri.settle(&start);
        let out = tri.nodes[0].on_sample(28.0, SimTime::ZERO).unwrap();
        assert_eq!(out.len(), 1, "{gate:?}");
        tri.flood(NodeId(0), out);
        assert_eq!(tri.count(MessageKind::Estimate), 1, "{gate:?}");
        assert_eq!(tri.sent.len(), 1, "{gate:?}");
        let a = tri.nodes[0].global_estimate().unwrap().clone();
        assert!(a.mean_scalar() > 25.0 * 1.02);
        assert_eq!(tri.nodes[1].global_estimate(), Some(&a));
        assert_eq!(tri.nodes[2].global_estimate(), Some(&a));

        // C out of A's range: B must relay, and nobody else speaks.
        let mut chain = Net::new(&[(0, 1), (1, 2)], 3, cfg.clone());
        chain.settle(&start);
        let out = chain.nodes[0].on_sample(28.0, SimTime::ZERO).unwrap();
        chain.flood(NodeId(0), out);
        assert_eq!(chain.count(MessageKind::Estimate), 2, "{gate:?}");
        assert_eq!(chain.sent.len(), 2, "{gate:?}");
        assert_eq!(chain.sent[1].sender(), NodeId(1));
        assert_eq!(chain.nodes[2].global_estimate(), Some(&a));
    }
}

#[test]
fn broadcast_gate_at_two_percent() {
    for gate in gates() {
        // a tighter neighbour estimate is adopted verbatim by CI
        let mut st = gate_fixture(gate);
        let out = st.on_estimate(NodeId(1), &scalar(25.0 * 1.019, 0.5), 1, SimTime(1)).unwrap();
        assert_eq!(st.global_estimate().unwrap().mean_scalar(), 25.0 * 1.019);
        assert!(out.is_empty(), "{gate:?}: {out:?}");

        let mut st = gate_fixture(gate);
        let out = st.on_estimate(NodeId(1), &scalar(25.0 * 1.021, 0.5), 1, SimTime(1)).unwrap();
        assert_eq!(out.len(), 1, "{gate:?}");
        assert!(matches!(&out[0], Message::EstimateBroadcast { src: NodeId(0), .. }));
    }
}

#[derive(Debug, Clone)]
enum Op {
    Sample(f64),
    Estimate { src: u32, mean: f64, var: f64 },
    PollRequest { src: u32 },
    ReplyToOpen { src: u32, mean: f64 },
    TimeoutOldest,
    Notice { accuser: u32, suspect: u32 },
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        (15.0..45.0f64).prop_map(Op::Sample),
        (1u32..=6, 15.0..45.0f64, 0.2..9.0f64).prop_map(|(src, mean, var)| Op::Estimate { src, mean, var }),
        (1u32..=6).prop_map(|src| Op::PollRequest { src }),
        (1u32..=6, 15.0..45.0f64).prop_map(|(src, mean)| Op::ReplyToOpen { src, mean }),
        Just(Op::TimeoutOldest),
        (1u32..=6, 0u32..=6).prop_map(|(accuser, suspect)| Op::Notice { accuser, suspect }),
    ]
}

fn config_strategy() -> impl Strategy<Value = ProtocolConfig> {
    (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(last_sent, after, quorum)| ProtocolConfig {
        gate: if last_sent {
            BroadcastGate::LastSent
        } else {
            BroadcastGate::PerNeighbor
        },
        suspect_fusion: if after {
            SuspectFusion::AfterVerdict
        } else {
            SuspectFusion::Immediate
        },
        reply_quorum: quorum,
        sensor_noise_sigma: 1.0,
        ..Default::default()
    })
}

/// Node 0 with neighbours 1..=5 in a ring around it; node 6 is a stranger.
fn hub(config: ProtocolConfig) -> NodeState {
    let neighbors = ids(&[1, 2, 3, 4, 5]);
    let two_hop: BTreeMap<NodeId, BTreeSet<NodeId>> = (1..=5u32)
        .map(|n| {
            let l = if n == 1 { 5 } else { n - 1 };
            let r = if n == 5 { 1 } else { n + 1 };
            (NodeId(n), ids(&[0, l, r]))
        })
        .collect();
    NodeState::new(NodeId(0), neighbors, two_hop, config)
}

fn apply(st: &mut NodeState, op: &Op, t: u64, seq: &mut u64) -> Vec<Message> {
    let now = SimTime(t);
    match *op {
        Op::Sample(m) => st.on_sample(m, now).unwrap(),
        Op::Estimate { src, mean, var } => {
            *seq += 1;
            st.on_estimate(NodeId(src), &scalar(mean, var), *seq, now).unwrap()
        }
        Op::PollRequest { src } => st.on_poll_request(
            NodeId(src),
            NodeId(0),
            PollId {
                accuser: NodeId(src),
                serial: t as u32,
            },
        ),
        Op::ReplyToOpen { src, mean } => match st.pending_polls().keys().next().copied() {
            Some(pid) => st.on_poll_reply(NodeId(src), pid, &scalar(mean, 1.0), now).unwrap(),
            None => Vec::new(),
        },
        Op::TimeoutOldest => match st.pending_polls().keys().next().copied() {
            Some(pid) => st.on_poll_timeout(pid).unwrap(),
            None => Vec::new(),
        },
        Op::Notice { accuser, suspect } => {
            st.on_isolation_notice(NodeId(accuser), NodeId(suspect)).unwrap();
            Vec::new()
        }
    }
}

fn sender_of(op: &Op) -> Option<NodeId> {
    match *op {
        Op::Estimate { src, .. } | Op::PollRequest { src } | Op::ReplyToOpen { src, .. } => Some(NodeId(src)),
        Op::Notice { accuser, .. } => Some(NodeId(accuser)),
        _ => None,
    }
}

proptest! {
    #[test]
    fn state_machine_invariants(config in config_strategy(), ops in prop::collection::vec(op_strategy(), 1..60)) {
        let mut st = hub(config.clone());
        let mut twin = hub(config);
        let (mut seq, mut twin_seq) = (0, 0);
        for (t, op) in ops.iter().enumerate() {
            let before = st.clone();
            let out = apply(&mut st, op, t as u64, &mut seq);
            // same state, same input, same output
            prop_assert_eq!(&out, &apply(&mut twin, op, t as u64, &mut twin_seq));

            // isolated senders change nothing and get no answer
            if let Some(src) = sender_of(op) {
                if before.is_isolated(src) {
                    prop_assert!(out.is_empty());
                    prop_assert_eq!(st.global_estimate(), before.global_estimate());
                    prop_assert_eq!(st.isolated(), before.isolated());
                }
            }
            for n in st.isolated() {
                prop_assert!(!st.neighbor_table().contains_key(n));
            }

            // every opened poll is pending or has exactly one verdict
            let s = st.stats();
            prop_assert_eq!(
                s.polls_opened,
                s.verdicts_malicious + s.verdicts_benign + s.verdicts_inconclusive + st.pending_polls().len() as u64
            );

            for m in &out {
                if let Message::EstimateBroadcast { estimate, .. } = m {
                    prop_assert!(!before.is_muted());
                    prop_assert_eq!(Some(estimate), st.global_estimate());
                }
            }

            // gate soundness for samples: the table is untouched, so the
            // decision can be replayed after the fact
            if matches!(op, Op::Sample(_)) && st.config().gate == BroadcastGate::PerNeighbor {
                let est = st.global_estimate().unwrap();
                let fired = out.iter().any(|m| m.kind() == MessageKind::Estimate);
                prop_assert_eq!(fired, before.decide_broadcast(est, None));
            }
        }

        // timing out everything leaves nothing pending
        while let Some(pid) = st.pending_polls().keys().next().copied() {
            st.on_poll_timeout(pid).unwrap();
        }
        let s = st.stats();
        prop_assert_eq!(s.polls_opened, s.verdicts_malicious + s.verdicts_benign + s.verdicts_inconclusive);
    }

    #[test]
    fn deviating_reply_never_clears_a_suspect(
        suspect in 20.0..60.0f64,
        replies in prop::collection::vec((15.0..60.0f64, 0.2..4.0f64), 0..9),
        extra_sd in 0.2..2.0f64,
    ) {
        let s = scalar(suspect, 1.0);
        let mut rs: Vec<GaussianEstimate> = replies.iter().map(|(m, v)| scalar(*m, *v)).collect();
        let before = verdict(&s, &rs, 3.0).unwrap();
        // a reply far below the suspect in its own units
        rs.push(scalar(suspect - 4.0 * extra_sd, extra_sd * extra_sd));
        let after = verdict(&s, &rs, 3.0).unwrap();
        if before == Verdict::Malicious {
            prop_assert_eq!(after, Verdict::Malicious);
        }
    }
}

#[test]
fn poll_reply_is_never_sent_to_an_isolated_node() {
    let mut st = hub(ProtocolConfig::default());
    st.set_global_estimate(scalar(25.0, 1.0));
    st.isolate(NodeId(3)).unwrap();
    let pid = PollId {
        accuser: NodeId(3),
        serial: 0,
    };
    assert!(st.on_poll_request(NodeId(3), NodeId(1), pid).is_empty());
    let out = st.on_poll_request(NodeId(2), NodeId(1), PollId { accuser: NodeId(2), ..pid });
    assert_eq!(out.len(), 1);
}
