//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the library's numerics: inverses, determinants,
//! ramps and quadrature are written out by hand so that agreement means
//! something.

#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use wsn_secagg::protocol::{BroadcastGate, Message, MessageKind, NodeId, NodeState, ProtocolConfig};
use wsn_secagg::{GaussianEstimate, SimTime};

pub fn scalar(mean: f64, var: f64) -> GaussianEstimate {
    GaussianEstimate::scalar(mean, var).unwrap()
}

pub fn vec2(mean: [f64; 2], cov: [[f64; 2]; 2]) -> GaussianEstimate {
    GaussianEstimate::new(
        DVector::from_row_slice(&mean),
        DMatrix::from_row_slice(2, 2, &[cov[0][0], cov[0][1], cov[1][0], cov[1][1]]),
    )
    .unwrap()
}

pub fn random_scalar<R: Rng>(rng: &mut R) -> GaussianEstimate {
    scalar(rng.random_range(-50.0..50.0), rng.random_range(0.01..25.0))
}

/// SPD 2x2 built as `L L^T + eps I` from a random lower-triangular `L`.
pub fn random_spd2<R: Rng>(rng: &mut R) -> [[f64; 2]; 2] {
    let a = rng.random_range(0.2..3.0);
    let b = rng.random_range(-2.0..2.0);
    let c = rng.random_range(0.2..3.0);
    [[a * a + 1e-3, a * b], [a * b, b * b + c * c + 1e-3]]
}

pub fn random_vec2<R: Rng>(rng: &mut R) -> GaussianEstimate {
    let m = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
    vec2(m, random_spd2(rng))
}

pub fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn inv2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let d = det2(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

pub fn as_arr(e: &GaussianEstimate) -> ([f64; 2], [[f64; 2]; 2]) {
    let m = e.mean();
    let p = e.cov();
    ([m[0], m[1]], [[p[(0, 0)], p[(0, 1)]], [p[(1, 0)], p[(1, 1)]]])
}

/// Closed-form 2x2 covariance intersection.
pub fn ci2(a: &GaussianEstimate, b: &GaussianEstimate, w: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let (ma, pa) = as_arr(a);
    let (mb, pb) = as_arr(b);
    let (ia, ib) = (inv2(pa), inv2(pb));
    let mut info = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            info[r][c] = w * ia[r][c] + (1.0 - w) * ib[r][c];
        }
    }
    let p = inv2(info);
    let mut rhs = [0.0; 2];
    for r in 0..2 {
        rhs[r] = w * (ia[r][0] * ma[0] + ia[r][1] * ma[1])
            + (1.0 - w) * (ib[r][0] * mb[0] + ib[r][1] * mb[1]);
    }
    let c = [
        p[0][0] * rhs[0] + p[0][1] * rhs[1],
        p[1][0] * rhs[0] + p[1][1] * rhs[1],
    ];
    (c, p)
}

/// Brute-force minimum of `det P_C(w)` over `n` evenly spaced weights.
pub fn grid_min_det(a: &GaussianEstimate, b: &GaussianEstimate, n: usize) -> (f64, f64) {
    (0..n)
        .map(|i| {
            let w = i as f64 / (n - 1) as f64;
            (w, det2(ci2(a, b, w).1))
        })
        .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn clamp_ramp(x: f64, lo: f64, hi: f64) -> f64 {
    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Mean and variance of `w(x) g(x) + l(x)` by the midpoint rule on `n`
/// uniform cells over the hull of both truncated supports.
///
/// The case split and the ramps are re-derived here from the weighting rules,
/// not borrowed from the library.
pub fn mixture_oracle(
    local: (f64, f64),
    global: (f64, f64),
    prev_local: Option<f64>,
    sharp_fall_sigmas: f64,
    support_sigmas: f64,
    n: usize,
) -> (f64, f64) {
    let (ml, sl) = local;
    let (mg, sg) = global;
    let local_weighting = ml > mg
        || prev_local.is_some_and(|p| (p - mg).abs() <= sharp_fall_sigmas * sg);
    let (lo, hi) = if ml == mg {
        (f64::NEG_INFINITY, f64::NEG_INFINITY)
    } else if local_weighting {
        (ml - 3.0 * sl, ml + 3.0 * sl)
    } else {
        ((ml - 3.0 * sl).max(mg - 3.0 * sg), (ml + 3.0 * sl).max(mg + 3.0 * sg))
    };
    let weight = |x: f64| if lo == f64::NEG_INFINITY { 1.0 } else { clamp_ramp(x, lo, hi) };

    let a = (ml - support_sigmas * sl).min(mg - support_sigmas * sg);
    let b = (ml + support_sigmas * sl).max(mg + support_sigmas * sg);
    let h = (b - a) / n as f64;
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let x = a + (i as f64 + 0.5) * h;
        let mut f = 0.0;
        if (x - ml).abs() <= support_sigmas * sl {
            f += normal_pdf(x, ml, sl);
        }
        if (x - mg).abs() <= support_sigmas * sg {
            f += weight(x) * normal_pdf(x, mg, sg);
        }
        let y = x - a;
        m0 += f * h;
        m1 += f * y * h;
        m2 += f * y * y * h;
    }
    let mean = m1 / m0;
    (a + mean, m2 / m0 - mean * mean)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

pub fn ids(v: &[u32]) -> BTreeSet<NodeId> {
    v.iter().map(|i| NodeId(*i)).collect()
}

/// Synchronous one-hop network over an explicit adjacency list.
pub struct Net {
    pub nodes: Vec<NodeState>,
    pub adj: Vec<BTreeSet<NodeId>>,
    pub sent: Vec<Message>,
}

impl Net {
    pub fn new(edges: &[(u32, u32)], n: u32, config: ProtocolConfig) -> Self {
        let mut adj = vec![BTreeSet::new(); n as usize];
        for &(a, b) in edges {
            adj[a as usize].insert(NodeId(b));
            adj[b as usize].insert(NodeId(a));
        }
        let nodes = (0..n)
            .map(|i| {
                let two_hop = adj[i as usize]
                    .iter()
                    .map(|m| (*m, adj[m.index()].clone()))
                    .collect();
                NodeState::new(NodeId(i), adj[i as usize].clone(), two_hop, config.clone())
            })
            .collect();
        Self {
            nodes,
            adj,
            sent: Vec::new(),
        }
    }

    /// Every node starts at `start`, believes its neighbours do too and has
    /// already announced it.
    pub fn settle(&mut self, start: &GaussianEstimate) {
        for i in 0..self.nodes.len() {
            let node = &mut self.nodes[i];
            node.set_global_estimate(start.clone());
            node.set_last_local_mean(Some(start.mean_scalar()));
            node.set_last_broadcast(Some(start.clone()));
            for m in self.adj[i].clone() {
                node.record_neighbor(m, start.clone(), SimTime::ZERO);
            }
        }
    }

    /// Deliver `out` from `src` and everything it triggers, breadth first.
    pub fn flood(&mut self, src: NodeId, out: Vec<Message>) {
        let mut queue: Vec<(NodeId, Message)> = out.into_iter().map(|m| (src, m)).collect();
        let mut t = 1;
        while !queue.is_empty() {
            let mut next = Vec::new();
            for (from, msg) in queue {
                self.sent.push(msg.clone());
                for dst in self.adj[from.index()].clone() {
                    let out = self.nodes[dst.index()].handle(&msg, SimTime(t)).unwrap();
                    next.extend(out.into_iter().map(|m| (dst, m)));
                }
            }
            queue = next;
            t += 1;
        }
    }

    pub fn count(&self, kind: MessageKind) -> usize {
        self.sent.iter().filter(|m| m.kind() == kind).count()
    }
}

/// Node 0 with neighbours 1 and 2 that cannot hear each other.
pub fn gate_fixture(gate: BroadcastGate) -> NodeState {
    let two_hop = [(NodeId(1), ids(&[0])), (NodeId(2), ids(&[0]))].into_iter().collect();
    let mut st = NodeState::new(
        NodeId(0),
        ids(&[1, 2]),
        two_hop,
        ProtocolConfig {
            gate,
            ..Default::default()
        },
    );
    let start = scalar(25.0, 1.0);
    st.set_global_estimate(start.clone());
    st.set_last_broadcast(Some(start.clone()));
    st.record_neighbor(NodeId(1), start.clone(), SimTime::ZERO);
    st.record_neighbor(NodeId(2), start, SimTime::ZERO);
    st
}
