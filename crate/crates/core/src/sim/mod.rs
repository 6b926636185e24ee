//! Closed-loop desk-scale verification: reduced-dynamics plant, sensor
//! synthesis, the assembled walking controller, and scenario runners.

pub mod actuator;
pub mod controller;
pub mod ik;
pub mod plant;
pub mod scenario;

pub use controller::{Controller, ControllerOutput};
pub use plant::{Plant, PlantOutcome, PlantState, PushEvent};
pub use scenario::{run_trial, TrialResult};
