//! AS-level BGP propagation simulator and hijack experiment harness.

pub mod bgp;
pub mod scenario;
pub mod sweep;
pub mod topology;

pub use bgp::{Network, SimError};
pub use scenario::{run_scenario, Outcome, Scenario, ScenarioError, ScenarioResult, ScenarioRun};
pub use topology::Topology;
