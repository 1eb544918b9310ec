//! Layered behaviors with graded inhibition and output merging.

use crate::geometry::Pose2;
use crate::messages::{AttitudeEstimate, GaitCommand, GameInfo, Gaze, MotionStatus, ObstacleObs, PoseBelief};
use std::collections::BTreeMap;
use thiserror::Error;

/// Activations at or below this are treated as inactive.
pub const ACTIVE_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BehaviorError {
    #[error("inhibition references unknown behavior `{0}`")]
    Unknown(String),
    #[error("inhibition cycle through `{0}`")]
    Cycle(String),
    #[error("behavior `{0}` declared twice in a layer")]
    Duplicate(String),
}

/// Abstracted inputs; no raw images or joint states.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorView {
    pub time: f64,
    /// egocentric ball position, when known
    pub ball: Option<[f64; 2]>,
    /// s since the ball was last detected
    pub ball_age: f64,
    pub pose: Option<PoseBelief>,
    pub game: GameInfo,
    pub attitude: AttitudeEstimate,
    pub obstacles: Vec<ObstacleObs>,
    pub motion: MotionStatus,
    /// merged signals from the layer above
    pub signals: BTreeMap<String, f64>,
    /// opponent goal center in the field frame
    pub goal: [f64; 2],
}

impl SensorView {
    pub fn signal(&self, name: &str) -> f64 {
        self.signals.get(name).copied().unwrap_or(0.0)
    }

    /// Opponent goal center relative to the robot, from the pose belief.
    pub fn goal_local(&self) -> Option<[f64; 2]> {
        self.pose.map(|b| b.pose.to_local(self.goal))
    }

    pub fn pose2(&self) -> Option<Pose2> {
        self.pose.map(|b| b.pose)
    }
}

/// What one behavior wants this tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Contribution {
    pub gait: Option<GaitCommand>,
    pub gaze: Option<Gaze>,
    pub motion: Option<String>,
    pub signals: BTreeMap<String, f64>,
}

/// Merged outputs of a layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActuatorOutputs {
    pub gait: Option<GaitCommand>,
    pub gaze: Option<Gaze>,
    pub motion: Option<String>,
    pub signals: BTreeMap<String, f64>,
}

pub trait Behavior: Send {
    fn name(&self) -> &str;
    /// Raw activation in [0, 1].
    fn activation(&mut self, view: &SensorView) -> f64;
    fn execute(&mut self, view: &SensorView, activation: f64) -> Contribution;
}

pub struct Layer {
    pub name: String,
    behaviors: Vec<Box<dyn Behavior>>,
    /// inhibitors of each behavior
    inhibitors: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Layer {
    /// Builds a layer; `inhibitions` are (inhibitor, inhibitee) name pairs
    /// and must form an acyclic graph.
    pub fn new(
        name: &str,
        behaviors: Vec<Box<dyn Behavior>>,
        inhibitions: &[(&str, &str)],
    ) -> Result<Self, BehaviorError> {
        let index: BTreeMap<String, usize> = behaviors
            .iter()
            .enumerate()
            .map(|(i, b)| (b.name().to_string(), i))
            .collect();
        if index.len() != behaviors.len() {
            let mut seen = std::collections::BTreeSet::new();
            let dup = behaviors.iter().find(|b| !seen.insert(b.name().to_string())).unwrap();
            return Err(BehaviorError::Duplicate(dup.name().to_string()));
        }
        let lookup = |n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| BehaviorError::Unknown(n.to_string()))
        };
        let mut inhibitors = vec![Vec::new(); behaviors.len()];
        for &(a, b) in inhibitions {
            let (a, b) = (lookup(a)?, lookup(b)?);
            if !inhibitors[b].contains(&a) {
                inhibitors[b].push(a);
            }
        }
        let order = topological(&inhibitors).map_err(|i| BehaviorError::Cycle(behaviors[i].name().to_string()))?;
        Ok(Self {
            name: name.to_string(),
            behaviors,
            inhibitors,
            order,
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.behaviors.iter().map(|b| b.name().to_string()).collect()
    }

    /// effective(b) = raw(b) · Π over inhibitors i of (1 − effective(i)),
    /// evaluated in topological order.
    pub fn resolve(&self, raw: &[f64]) -> Vec<f64> {
        resolve_inhibitions(&self.inhibitors, &self.order, raw)
    }

    /// Runs the layer; returns merged outputs and effective activations.
    pub fn step(&mut self, view: &SensorView) -> (ActuatorOutputs, Vec<(String, f64)>) {
        let raw: Vec<f64> = self
            .behaviors
            .iter_mut()
            .map(|b| b.activation(view).clamp(0.0, 1.0))
            .collect();
        let eff = self.resolve(&raw);
        let mut contributions = Vec::new();
        for (i, b) in self.behaviors.iter_mut().enumerate() {
            if eff[i] > ACTIVE_EPS {
                contributions.push((eff[i], b.execute(view, eff[i])));
            }
        }
        let activations = self
            .behaviors
            .iter()
            .zip(&eff)
            .map(|(b, &e)| (b.name().to_string(), e))
            .collect();
        (merge(&contributions), activations)
    }
}

/// Topological order of a graph given by incoming edges; Err(node) on a cycle.
fn topological(incoming: &[Vec<usize>]) -> Result<Vec<usize>, usize> {
    let n = incoming.len();
    let mut indeg: Vec<usize> = incoming.iter().map(|v| v.len()).collect();
    let mut out = Vec::with_capacity(n);
    let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).rev().collect();
    while let Some(i) = ready.pop() {
        out.push(i);
        for j in 0..n {
            if incoming[j].contains(&i) {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(j);
                }
            }
        }
    }
    if out.len() == n {
        Ok(out)
    } else {
        Err((0..n).find(|&i| indeg[i] > 0).unwrap())
    }
}

pub fn resolve_inhibitions(inhibitors: &[Vec<usize>], order: &[usize], raw: &[f64]) -> Vec<f64> {
    let mut eff = vec![0.0; raw.len()];
    for &b in order {
        eff[b] = inhibitors[b].iter().fold(raw[b], |acc, &i| acc * (1.0 - eff[i]));
    }
    eff
}

/// Continuous channels: activation-weighted mean. Discrete channels: the
/// contributor with the highest activation (first on ties).
pub fn merge(contributions: &[(f64, Contribution)]) -> ActuatorOutputs {
    let mut out = ActuatorOutputs::default();
    let (mut gw, mut g) = (0.0, [0.0; 3]);
    let mut walk: Option<(f64, bool)> = None;
    let (mut hw, mut h) = (0.0, [0.0; 2]);
    let mut motion: Option<(f64, &String)> = None;
    let mut sig: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for (a, c) in contributions {
        if let Some(cmd) = c.gait {
            gw += a;
            g[0] += a * cmd.vx;
            g[1] += a * cmd.vy;
            g[2] += a * cmd.omega;
            if walk.is_none_or(|(w, _)| *a > w) {
                walk = Some((*a, cmd.walk));
            }
        }
        if let Some(z) = c.gaze {
            hw += a;
            h[0] += a * z.azimuth;
            h[1] += a * z.elevation;
        }
        if let Some(m) = &c.motion {
            if motion.is_none_or(|(w, _)| *a > w) {
                motion = Some((*a, m));
            }
        }
        for (k, v) in &c.signals {
            let e = sig.entry(k.clone()).or_insert((0.0, 0.0));
            e.0 += a;
            e.1 += a * v;
        }
    }
    let gaits: Vec<GaitCommand> = contributions.iter().filter_map(|(_, c)| c.gait).collect();
    let gazes: Vec<Gaze> = contributions.iter().filter_map(|(_, c)| c.gaze).collect();
    // a lone contributor passes through bit-exactly
    if gaits.len() == 1 {
        out.gait = Some(gaits[0]);
    } else if gw > 0.0 {
        out.gait = Some(GaitCommand {
            vx: g[0] / gw,
            vy: g[1] / gw,
            omega: g[2] / gw,
            walk: walk.map(|w| w.1).unwrap_or(false),
        });
    }
    if gazes.len() == 1 {
        out.gaze = Some(gazes[0]);
    } else if hw > 0.0 {
        out.gaze = Some(Gaze {
            azimuth: h[0] / hw,
            elevation: h[1] / hw,
        });
    }
    out.motion = motion.map(|(_, m)| m.clone());
    out.signals = sig.into_iter().map(|(k, (w, s))| (k, s / w)).collect();
    out
}

/// Layers evaluated top-down; each layer's signals enter the next one's view.
pub struct Hierarchy {
    pub layers: Vec<Layer>,
}

impl Hierarchy {
    pub fn step(&mut self, view: &SensorView) -> (ActuatorOutputs, BTreeMap<String, f64>) {
        let mut v = view.clone();
        let mut activations = BTreeMap::new();
        let mut last = ActuatorOutputs::default();
        for layer in &mut self.layers {
            let (out, act) = layer.step(&v);
            for (name, a) in act {
                activations.insert(format!("{}/{}", layer.name, name), a);
            }
            v.signals = out.signals.clone();
            last = out;
        }
        (last, activations)
    }
}
