use serde::Serialize;

use crate::scenario::Seeds;
use crate::sim::NodeEnergy;

/// Transmissions by message type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MessageCounts {
    pub estimate: u64,
    pub poll_request: u64,
    pub poll_reply: u64,
    pub isolation_notice: u64,
}

impl MessageCounts {
    pub fn total(&self) -> u64 {
        self.estimate + self.poll_request + self.poll_reply + self.isolation_notice
    }

    pub fn security(&self) -> u64 {
        self.poll_request + self.poll_reply + self.isolation_notice
    }
}

/// Per-recipient losses, by cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DropCounts {
    /// Random channel loss.
    pub loss: u64,
    /// Receiver already held `buffer_capacity` undelivered messages.
    pub buffer: u64,
    /// Receiver was dead when the frame arrived.
    pub dead: u64,
    /// Delivered, then discarded because the sender was isolated.
    pub isolation: u64,
    /// Delivered from a node the receiver does not list as a neighbour.
    pub unknown: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub id: u32,
    pub compromised: bool,
    pub alive: bool,
    pub death_time_s: Option<f64>,
    pub degree: usize,
    pub final_mean: Option<f64>,
    pub final_variance: Option<f64>,
    /// Alive neighbours that have this node in their isolation set at the end.
    pub isolated_by: usize,
    /// Isolated by a strict majority of its alive neighbours.
    pub flagged: bool,
    pub first_notice_s: Option<f64>,
    pub energy: NodeEnergy,
    pub remaining_j: f64,
    pub broadcasts: u64,
}

/// Outcome of one simulation run.
///
/// `delivery_ratio` is frames received over frames addressed to in-range
/// receivers (received / sent), per recipient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub seeds: Seeds,
    pub security_enabled: bool,
    pub node_count: usize,
    pub compromised_count: usize,
    pub honest_count: usize,
    pub component_count: usize,
    pub mean_degree: f64,
    pub sent: MessageCounts,
    pub deliveries_attempted: u64,
    pub deliveries_received: u64,
    pub dropped: DropCounts,
    pub delivery_ratio: f64,
    pub energy_total_j: f64,
    pub energy_tx_j: f64,
    pub energy_rx_j: f64,
    pub energy_sense_j: f64,
    pub dead_nodes: usize,
    pub estimate_rmse: f64,
    pub estimate_max_abs_error: f64,
    /// Share of alive honest nodes whose final mean is within 3 field sigmas
    /// of the true maximum.
    pub converged_fraction: f64,
    pub final_ground_truth_max: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub detection_rate: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub mean_time_to_detection_s: Option<f64>,
    pub polls_opened: u64,
    pub verdicts_malicious: u64,
    pub verdicts_benign: u64,
    pub verdicts_inconclusive: u64,
    pub tainted_broadcasts: u64,
    pub suspect_self_replies: u64,
    pub duplicate_replies: u64,
    pub nodes: Vec<NodeReport>,
}
