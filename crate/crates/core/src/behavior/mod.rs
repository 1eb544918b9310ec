//! Behavior frameworks and the soccer behaviors built on them.

pub mod framework;
pub mod io;
pub mod soccer;
pub mod state_controller;

pub use framework::{ActuatorOutputs, Behavior, BehaviorError, Contribution, Hierarchy, Layer, SensorView};
pub use io::BehaviorNode;
pub use soccer::{soccer_hierarchy, SoccerParams};
pub use state_controller::{ControllerStatus, State, StateController, Transition};
