//! Motion generation: keyframe playback, walking, head control and fall
//! protection, run as plugins inside the control loop.
//!
//! Modules run in a fixed order each cycle and cooperate through a
//! [`Blackboard`]: later modules overwrite the joint targets of earlier ones
//! on the joints they drive, and status flags (relax, suppress gait, playing
//! motion) let them coordinate without knowing each other.

pub mod fall;
pub mod gait;
pub mod head;
pub mod keyframe;
pub mod player;
pub mod spline;

use crate::config::{ConfigError, ConfigServer};
use crate::control::HardwareFeedback;
use crate::geometry::Pose2;
use crate::messages::{AttitudeEstimate, FallState, GaitCommand, Gaze};
use crate::model::RobotModel;
use thiserror::Error;

pub use keyframe::{Keyframe, KeyframeMotion, MotionLibrary, PlannedMotion};

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("keyframe ordering error: {0}")]
    Ordering(String),
    #[error("invalid motion: {0}")]
    Invalid(String),
    #[error("motion infeasible: {0}")]
    Infeasible(String),
    #[error("time {t} outside motion range [0, {end}]")]
    Range { t: f64, end: f64 },
    #[error("motion parse error: {0}")]
    Parse(String),
    #[error("motion io error: {0}")]
    Io(String),
    #[error("unknown motion module `{0}`")]
    UnknownModule(String),
    #[error("model lacks joint `{0}` required by a motion module")]
    MissingJoint(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Default module order; fall protection first so its flags apply the same cycle.
pub const MODULE_ORDER: [&str; 4] = ["fall_protection", "gait", "head", "motion_player"];

/// Shared per-robot state the motion modules read and write.
#[derive(Debug, Clone)]
pub struct Blackboard {
    pub q_des: Vec<f64>,
    pub qdot_des: Vec<f64>,
    /// per-joint effort multiplier, reset to 1 every cycle
    pub effort: Vec<f64>,
    /// forces every effort to zero this cycle
    pub relax: bool,
    /// gait must not step this cycle
    pub suppress_gait: bool,
    /// motion play requests received from the bus this cycle
    pub requests: Vec<String>,
    /// request that preempts anything playing (get-up motions)
    pub forced_request: Option<String>,
    pub playing: Option<String>,
    pub progress: f64,
    /// name of the motion that completed during the last player step
    pub finished: Option<String>,
    pub walking: bool,
    /// cumulative gait odometry
    pub odometry: Pose2,
    pub fall_state: FallState,
    pub errors: Vec<String>,
}

impl Blackboard {
    pub fn new(initial: &[f64]) -> Self {
        let n = initial.len();
        Self {
            q_des: initial.to_vec(),
            qdot_des: vec![0.0; n],
            effort: vec![1.0; n],
            relax: false,
            suppress_gait: false,
            requests: Vec::new(),
            forced_request: None,
            playing: None,
            progress: 0.0,
            finished: None,
            walking: false,
            odometry: Pose2::default(),
            fall_state: FallState::Ok,
            errors: Vec::new(),
        }
    }

    /// Clears the per-cycle fields; joint targets persist.
    pub fn begin_cycle(&mut self) {
        self.effort.iter_mut().for_each(|e| *e = 1.0);
        self.qdot_des.iter_mut().for_each(|v| *v = 0.0);
        self.relax = false;
        self.suppress_gait = false;
        self.errors.clear();
    }
}

/// Read-only inputs of one control cycle.
pub struct MotionContext<'a> {
    pub time: f64,
    pub dt: f64,
    pub cycle: u64,
    pub model: &'a RobotModel,
    pub feedback: &'a HardwareFeedback,
    pub attitude: AttitudeEstimate,
    pub gait_command: GaitCommand,
    pub gaze: Gaze,
}

/// A motion plugin stepped once per control cycle.
pub trait MotionModule: Send {
    fn name(&self) -> &str;
    /// An error puts the control loop into its relaxed safe state.
    fn step(&mut self, ctx: &MotionContext, bb: &mut Blackboard) -> Result<(), String>;
}

/// Resolves joint names to model indices.
pub(crate) fn joint_indices(model: &RobotModel, names: &[String]) -> Result<Vec<usize>, MotionError> {
    names
        .iter()
        .map(|n| model.joint_index(n).map_err(|_| MotionError::MissingJoint(n.clone())))
        .collect()
}

/// Instantiates a module by its registry name.
pub fn create_module(
    name: &str,
    model: &RobotModel,
    config: &ConfigServer,
    library: &MotionLibrary,
) -> Result<Box<dyn MotionModule>, MotionError> {
    Ok(match name {
        "fall_protection" => Box::new(fall::FallProtection::new(config, library)?),
        "gait" => Box::new(gait::GaitModule::new(model, config)?),
        "head" => Box::new(head::HeadModule::new(model, config)?),
        "motion_player" => Box::new(player::MotionPlayer::new(model, library.clone())),
        other => return Err(MotionError::UnknownModule(other.to_string())),
    })
}

pub fn is_known_module(name: &str) -> bool {
    MODULE_ORDER.contains(&name)
}
