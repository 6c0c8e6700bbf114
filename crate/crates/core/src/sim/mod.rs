//! Discrete-event simulation of a sensor deployment.

mod engine;
mod event;
mod field;
mod radio;
mod topology;

pub use engine::{run, run_traced, SimError, Simulation};
pub use event::{EventKey, EventQueue, SimEvent};
pub use field::{AdversaryModel, Attack, Hotspot, PhysicalField};
pub use radio::{EnergyLedger, EnergyUse, NodeEnergy, RadioModel};
pub use topology::{generate_topology, Topology};
