//! Attitude estimation and Monte Carlo localization.

pub mod attitude;
pub mod mcl;

pub use attitude::{AttitudeFilter, AttitudeParams, GRAVITY};
pub use mcl::{Localizer, MclParams, Particle};
