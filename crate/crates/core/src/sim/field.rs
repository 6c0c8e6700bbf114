use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Topology;
use crate::protocol::NodeId;

/// Temporary offset applied to part of the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hotspot {
    /// Affected node ids.
    #[serde(default)]
    pub nodes: Vec<u32>,
    /// Optional disc `[x, y, radius]` in metres; nodes inside are affected too.
    #[serde(default)]
    pub region: Option<[f64; 3]>,
    pub offset_c: f64,
    pub start_s: f64,
    pub end_s: f64,
}

impl Hotspot {
    pub(crate) fn validate(&self, node_count: usize) -> Result<(), String> {
        if let Some(bad) = self.nodes.iter().find(|n| **n as usize >= node_count) {
            return Err(format!("node {bad} out of range"));
        }
        if !(self.offset_c.is_finite() && self.start_s.is_finite() && self.end_s.is_finite()) {
            return Err("non-finite value".into());
        }
        if self.end_s < self.start_s {
            return Err("end_s before start_s".into());
        }
        Ok(())
    }

    fn covers(&self, node: NodeId, topology: &Topology) -> bool {
        if self.nodes.contains(&node.0) {
            return true;
        }
        match self.region {
            Some([cx, cy, r]) => {
                let (x, y) = topology.position(node);
                (x - cx).powi(2) + (y - cy).powi(2) <= r * r
            }
            None => false,
        }
    }

    fn active(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }
}

/// The sensed quantity: a uniform mean with Gaussian sample noise, plus an
/// optional hotspot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalField {
    pub base_mean_c: f64,
    pub base_sigma_c: f64,
    pub hotspot: Option<Hotspot>,
}

impl Default for PhysicalField {
    fn default() -> Self {
        Self {
            base_mean_c: 25.0,
            base_sigma_c: 1.0,
            hotspot: None,
        }
    }
}

impl PhysicalField {
    /// Noise-free field value at `node` at time `t` (seconds).
    pub fn true_mean(&self, node: NodeId, t: f64, topology: &Topology) -> f64 {
        match &self.hotspot {
            Some(h) if h.active(t) && h.covers(node, topology) => self.base_mean_c + h.offset_c,
            _ => self.base_mean_c,
        }
    }

    pub fn sample<R: Rng>(&self, node: NodeId, t: f64, topology: &Topology, rng: &mut R) -> f64 {
        let mean = self.true_mean(node, t, topology);
        if self.base_sigma_c > 0.0 {
            mean + self.base_sigma_c * standard_normal(rng)
        } else {
            mean
        }
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

/// How a compromised node corrupts what it senses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Attack {
    ConstantOffset { offset_c: f64 },
    StuckAt { value_c: f64 },
    RandomNoise { sigma_c: f64 },
}

impl Attack {
    pub(crate) fn validate(&self) -> Result<(), String> {
        match *self {
            Attack::ConstantOffset { offset_c: v } | Attack::StuckAt { value_c: v } if !v.is_finite() => {
                Err("non-finite attack value".into())
            }
            Attack::RandomNoise { sigma_c } if !(sigma_c >= 0.0 && sigma_c.is_finite()) => {
                Err("sigma_c must be non-negative".into())
            }
            _ => Ok(()),
        }
    }

    /// Scalar size of the attack, used as a sweep axis.
    pub fn magnitude(&self) -> f64 {
        match *self {
            Attack::ConstantOffset { offset_c } => offset_c,
            Attack::StuckAt { value_c } => value_c,
            Attack::RandomNoise { sigma_c } => sigma_c,
        }
    }

    pub fn with_magnitude(&self, v: f64) -> Self {
        match self {
            Attack::ConstantOffset { .. } => Attack::ConstantOffset { offset_c: v },
            Attack::StuckAt { .. } => Attack::StuckAt { value_c: v },
            Attack::RandomNoise { .. } => Attack::RandomNoise { sigma_c: v },
        }
    }

    pub fn corrupt<R: Rng>(&self, true_reading: f64, rng: &mut R) -> f64 {
        match *self {
            Attack::ConstantOffset { offset_c } => true_reading + offset_c,
            Attack::StuckAt { value_c } => value_c,
            Attack::RandomNoise { sigma_c } => true_reading + sigma_c * standard_normal(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryModel {
    pub compromised_fraction: f64,
    pub attack: Attack,
    /// Corruption starts at this simulation time.
    pub onset_s: f64,
}

impl Default for AdversaryModel {
    fn default() -> Self {
        Self {
            compromised_fraction: 0.0,
            attack: Attack::ConstantOffset { offset_c: 10.0 },
            onset_s: 0.0,
        }
    }
}

impl AdversaryModel {
    /// Compromised flags per node, drawn uniformly without replacement.
    pub fn select(&self, node_count: usize, seed: u64) -> Vec<bool> {
        let k = ((self.compromised_fraction * node_count as f64).round() as usize).min(node_count);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flags = vec![false; node_count];
        for i in index::sample(&mut rng, node_count, k) {
            flags[i] = true;
        }
        flags
    }
}
