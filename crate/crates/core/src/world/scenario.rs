//! Scenario files: initial poses, noise levels, scripted events and the
//! criterion a simulation run is judged by.

use super::{FallDirection, ObservationMode, ObservationParams, RefereeParams, SimParams};
use crate::control::DummyConfig;
use crate::field::FieldSpec;
use crate::perception::Obstacle;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessCriterion {
    /// we score at least once before the time limit
    Goal,
    /// every injected fall ends with the robot up and walking again
    Recovered,
    /// the run reaches its time limit without a control fault
    #[default]
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioEvent {
    Fall { t: f64, direction: FallDirection },
    Penalize { t: f64 },
    Unpenalize { t: f64 },
    PlaceBall { t: f64, position: [f64; 2] },
}

impl ScenarioEvent {
    pub fn time(&self) -> f64 {
        match *self {
            ScenarioEvent::Fall { t, .. }
            | ScenarioEvent::Penalize { t }
            | ScenarioEvent::Unpenalize { t }
            | ScenarioEvent::PlaceBall { t, .. } => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub position: [f64; 2],
    #[serde(default = "default_obstacle_radius")]
    pub radius: f64,
    #[serde(default = "default_obstacle_height")]
    pub height: f64,
}

fn default_obstacle_radius() -> f64 {
    0.15
}

fn default_obstacle_height() -> f64 {
    0.6
}

impl From<ObstacleSpec> for Obstacle {
    fn from(o: ObstacleSpec) -> Self {
        Obstacle {
            position: o.position,
            radius: o.radius,
            height: o.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// simulated seconds
    pub duration: f64,
    pub mode: ObservationMode,
    pub success: SuccessCriterion,
    /// (x, y, θ) in field coordinates
    pub robot: [f64; 3],
    pub ball: [f64; 2],
    pub field: FieldSpec,
    pub sim: SimParams,
    pub observation: ObservationParams,
    pub referee: RefereeParams,
    pub hardware: DummyConfig,
    #[serde(rename = "obstacle")]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(rename = "event")]
    pub events: Vec<ScenarioEvent>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "soccer".into(),
            seed: 1,
            duration: 120.0,
            mode: ObservationMode::Geometric,
            success: SuccessCriterion::Goal,
            robot: [-1.0, 0.0, 0.0],
            ball: [0.0, 0.0],
            field: FieldSpec::default(),
            sim: SimParams::default(),
            observation: ObservationParams::default(),
            referee: RefereeParams::default(),
            hardware: DummyConfig {
                compass_noise: 0.2,
                ..DummyConfig::default()
            },
            obstacles: Vec::new(),
            events: Vec::new(),
        }
    }
}

pub const BUNDLED_SCENARIOS: [(&str, &str); 3] = [
    ("soccer", include_str!("../../data/scenarios/soccer.toml")),
    ("fall", include_str!("../../data/scenarios/fall.toml")),
    ("obstacle", include_str!("../../data/scenarios/obstacle.toml")),
];

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// A bundled scenario by name.
    pub fn bundled(name: &str) -> Result<Self, ScenarioError> {
        let text = BUNDLED_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| ScenarioError::Invalid(format!("no bundled scenario `{name}`")))?;
        Self::parse(text)
    }

    /// Resolves a bundled name or a file path.
    pub fn resolve(name_or_path: &str) -> Result<Self, ScenarioError> {
        if BUNDLED_SCENARIOS.iter().any(|(n, _)| *n == name_or_path) {
            Self::bundled(name_or_path)
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.field.validate().map_err(ScenarioError::Invalid)?;
        if !(self.duration > 0.0) {
            return Err(ScenarioError::Invalid("duration must be positive".into()));
        }
        if self.events.iter().any(|e| !(e.time() >= 0.0)) {
            return Err(ScenarioError::Invalid("event times must be non-negative".into()));
        }
        if self.obstacles.iter().any(|o| !(o.radius > 0.0 && o.height > 0.0)) {
            return Err(ScenarioError::Invalid(
                "obstacle radius and height must be positive".into(),
            ));
        }
        if self.success == SuccessCriterion::Recovered
            && !self.events.iter().any(|e| matches!(e, ScenarioEvent::Fall { .. }))
        {
            return Err(ScenarioError::Invalid("recovered criterion needs a fall event".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_parse_and_roundtrip() {
        for (name, _) in BUNDLED_SCENARIOS {
            let s = Scenario::bundled(name).unwrap();
            assert_eq!(Scenario::parse(&s.to_text()).unwrap(), s);
        }
        assert!(Scenario::parse("duration = -1.0").is_err());
        assert!(Scenario::parse("bogus = 1").is_err());
    }
}
