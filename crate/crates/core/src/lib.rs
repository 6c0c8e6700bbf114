//! Secure in-network aggregation for wireless sensor networks.
//!
//! Nodes estimate the network-wide maximum temperature as a Gaussian
//! (mean, covariance) pair. Estimates are merged with covariance
//! intersection, combined with local readings by moment matching, and
//! suppressed when they change by less than a relative threshold or when
//! every interested neighbour already heard the original sender. Outliers
//! trigger a neighbourhood poll whose majority verdict isolates the suspect.
//!
//! * [`fusion`]: covariance intersection and local/global combination.
//! * [`protocol`]: the per-node state machine, free of any I/O.
//! * [`sim`]: a deterministic discrete-event simulator around it.
//! * [`scenario`]: configuration, experiments, sweeps and reports.

pub mod fusion;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod time;

pub use fusion::{ci_fuse, combine_local, fuse_global, optimal_omega, FusionParams, GaussianEstimate};
pub use protocol::{Message, NodeId, NodeState, ProtocolConfig};
pub use scenario::{parse_config, run_experiment, run_sweep, RunMetrics, ScenarioConfig};
pub use time::SimTime;
