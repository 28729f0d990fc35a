//! Discrete-event model of the base-station protocol: beacons and gradient
//! routing on a unit-disk graph, bootstrap and cluster merging, advert
//! piggybacking, handover with retry, failures and splits, and per-message
//! energy accounting.

pub mod energy;
pub mod error;
pub mod fuzz;
pub mod handover;
pub mod log;
pub mod message;
pub mod model;
pub mod queue;
pub mod scenario;
pub mod sim;
pub mod topology;

pub use energy::{EnergyParams, RadioParams, TrafficParams};
pub use error::{ProtocolError, Result};
pub use scenario::{Action, Directive, NodeKind, NodeSpec, ProtocolPolicy, Scenario};
pub use sim::{ComponentStatus, ConvergenceReport, Role, Simulator};
pub use topology::{build_topology, Position, Topology};
