use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::protocol::NodeId;

/// Node placement and the unit-disk connectivity it induces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Topology {
    positions: Vec<(f64, f64)>,
    range_m: f64,
    adjacency: Vec<BTreeSet<NodeId>>,
}

impl Topology {
    /// Nodes `i` and `j` are neighbours iff their distance is at most `range_m`.
    pub fn from_positions(positions: Vec<(f64, f64)>, range_m: f64) -> Self {
        let n = positions.len();
        let mut adjacency = vec![BTreeSet::new(); n];
        let r2 = range_m * range_m;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = positions[i].0 - positions[j].0;
                let dy = positions[i].1 - positions[j].1;
                if dx * dx + dy * dy <= r2 {
                    adjacency[i].insert(NodeId(j as u32));
                    adjacency[j].insert(NodeId(i as u32));
                }
            }
        }
        Self {
            positions,
            range_m,
            adjacency,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn range_m(&self) -> f64 {
        self.range_m
    }

    pub fn position(&self, n: NodeId) -> (f64, f64) {
        self.positions[n.index()]
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn neighbors(&self, n: NodeId) -> &BTreeSet<NodeId> {
        &self.adjacency[n.index()]
    }

    pub fn are_neighbors(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.index()].contains(&b)
    }

    /// For each neighbour of `n`, that neighbour's own neighbour set.
    pub fn two_hop_map(&self, n: NodeId) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        self.neighbors(n)
            .iter()
            .map(|m| (*m, self.neighbors(*m).clone()))
            .collect()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.adjacency.iter().map(|a| a.len()).sum::<usize>() as f64 / self.len() as f64
    }

    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut count = 0;
        for start in 0..self.len() {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for v in &self.adjacency[u] {
                    if !seen[v.index()] {
                        seen[v.index()] = true;
                        queue.push_back(v.index());
                    }
                }
            }
        }
        count
    }
}

/// Place `n` nodes uniformly at random on `area_m` and connect those within range.
///
/// Connectivity is not enforced; see [`Topology::component_count`].
pub fn generate_topology(n: usize, area_m: (f64, f64), range_m: f64, seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..n)
        .map(|_| {
            (
                rng.random_range(0.0..area_m.0),
                rng.random_range(0.0..area_m.1),
            )
        })
        .collect();
    Topology::from_positions(positions, range_m)
}
