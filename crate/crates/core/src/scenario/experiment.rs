use crate::scenario::{RunMetrics, ScenarioConfig};
use crate::sim::{self, SimError};

/// Run one scenario and attribute detection outcomes.
///
/// A compromised node counts as detected when a strict majority of its alive
/// neighbours have isolated it by the end of the run; the time to detection
/// is measured from attack onset to the first isolation notice naming it.
pub fn run_experiment(config: &ScenarioConfig) -> Result<RunMetrics, SimError> {
    sim::run(config)
}
