use serde::Serialize;

/// Idealized broadcast radio: no collisions, optional i.i.d. loss, finite
/// receive buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioModel {
    pub range_m: f64,
    pub loss_probability: f64,
    pub per_message_airtime_s: f64,
    pub tx_jitter_s: f64,
    pub buffer_capacity: usize,
}

impl Default for RadioModel {
    fn default() -> Self {
        Self {
            range_m: 15.0,
            loss_probability: 0.0,
            per_message_airtime_s: 0.002,
            tx_jitter_s: 0.01,
            buffer_capacity: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct NodeEnergy {
    pub spent_tx_j: f64,
    pub spent_rx_j: f64,
    pub spent_sense_j: f64,
}

impl NodeEnergy {
    pub fn total(&self) -> f64 {
        self.spent_tx_j + self.spent_rx_j + self.spent_sense_j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyUse {
    Transmit,
    Receive,
    Sense,
}

/// Per-node battery accounting. A node whose remaining charge reaches zero
/// is dead.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    initial_j: f64,
    nodes: Vec<NodeEnergy>,
}

impl EnergyLedger {
    pub fn new(node_count: usize, initial_j: f64) -> Self {
        Self {
            initial_j,
            nodes: vec![NodeEnergy::default(); node_count],
        }
    }

    pub fn initial_j(&self) -> f64 {
        self.initial_j
    }

    pub fn remaining_j(&self, node: usize) -> f64 {
        self.initial_j - self.nodes[node].total()
    }

    pub fn is_depleted(&self, node: usize) -> bool {
        self.remaining_j(node) <= 0.0
    }

    pub fn node(&self, node: usize) -> &NodeEnergy {
        &self.nodes[node]
    }

    pub fn nodes(&self) -> &[NodeEnergy] {
        &self.nodes
    }

    /// Charge `joules` to `node`; returns true if this exhausted the battery.
    pub fn debit(&mut self, node: usize, what: EnergyUse, joules: f64) -> bool {
        let e = &mut self.nodes[node];
        match what {
            EnergyUse::Transmit => e.spent_tx_j += joules,
            EnergyUse::Receive => e.spent_rx_j += joules,
            EnergyUse::Sense => e.spent_sense_j += joules,
        }
        self.is_depleted(node)
    }

    pub fn total_spent_j(&self) -> f64 {
        self.nodes.iter().map(NodeEnergy::total).sum()
    }
}
