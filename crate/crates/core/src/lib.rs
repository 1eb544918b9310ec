//! Control, perception, estimation and behavior stack for a small
//! kid-size humanoid soccer robot, plus the simulator used to test it.

pub mod behavior;
pub mod config;
pub mod control;
pub mod estimation;
pub mod field;
pub mod geometry;
pub mod launch;
pub mod messages;
pub mod model;
pub mod motion;
pub mod msgbus;
pub mod perception;
pub mod telemetry;
pub mod topics;
pub mod world;
