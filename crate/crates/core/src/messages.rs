//! Payload types carried on the message bus.
//!
//! Every topic is typed by the schema name of its [`Message`] variant; the
//! bus rejects a publisher or subscriber that disagrees with the registered
//! schema. All payloads are serde-serializable so they can be bagged and
//! forwarded by the gateway.

use crate::config::ConfigChange;
use crate::geometry::Pose2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Message {
    Empty,
    Float(f64),
    Text(String),
    Ack { ok: bool, detail: String },
    JointState(JointStateMsg),
    Imu(ImuReading),
    Attitude(AttitudeEstimate),
    Detections(DetectionSet),
    PoseBelief(PoseBelief),
    Particles(Vec<[f64; 3]>),
    GaitCommand(GaitCommand),
    Odometry(Pose2),
    Gaze(Gaze),
    MotionRequest { name: String },
    MotionStatus(MotionStatus),
    GameState(GameInfo),
    Image(ImageMsg),
    Activations(BTreeMap<String, f64>),
    ConfigChange(ConfigChange),
    Fade { target: f64, duration: f64 },
    WorldTruth(WorldTruth),
    Diagnostics(BTreeMap<String, f64>),
}

impl Message {
    /// Schema name used for topic typing (the snake_case variant name).
    pub fn schema(&self) -> &'static str {
        match self {
            Message::Empty => "empty",
            Message::Float(_) => "float",
            Message::Text(_) => "text",
            Message::Ack { .. } => "ack",
            Message::JointState(_) => "joint_state",
            Message::Imu(_) => "imu",
            Message::Attitude(_) => "attitude",
            Message::Detections(_) => "detections",
            Message::PoseBelief(_) => "pose_belief",
            Message::Particles(_) => "particles",
            Message::GaitCommand(_) => "gait_command",
            Message::Odometry(_) => "odometry",
            Message::Gaze(_) => "gaze",
            Message::MotionRequest { .. } => "motion_request",
            Message::MotionStatus(_) => "motion_status",
            Message::GameState(_) => "game_state",
            Message::Image(_) => "image",
            Message::Activations(_) => "activations",
            Message::ConfigChange(_) => "config_change",
            Message::Fade { .. } => "fade",
            Message::WorldTruth(_) => "world_truth",
            Message::Diagnostics(_) => "diagnostics",
        }
    }

    pub fn ack(ok: bool, detail: impl Into<String>) -> Self {
        Message::Ack {
            ok,
            detail: detail.into(),
        }
    }
}

/// Per-joint measurements or commands, ordered like the robot model joints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointStateMsg {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub tau: Vec<f64>,
    pub effort: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuReading {
    /// specific force in the trunk frame, m/s² (reads +g along up when at rest)
    pub accel: [f64; 3],
    /// rad/s
    pub gyro: [f64; 3],
    /// (cos, sin) of the magnetic heading
    pub compass: [f64; 2],
    /// volts
    pub battery: f64,
    /// hottest servo, °C
    pub max_temp: f64,
    pub buttons: [bool; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttitudeEstimate {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub gyro_bias: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CrossingKind {
    L,
    T,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallObs {
    /// egocentric ground-plane position, m
    pub position: [f64; 2],
    /// image coordinates of the blob center
    pub pixel: [f64; 2],
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleObs {
    pub position: [f64; 2],
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingObs {
    pub position: [f64; 2],
    pub kind: CrossingKind,
}

/// Objects detected in one frame, in egocentric ground coordinates
/// (x forward, y left, origin below the trunk).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionSet {
    pub ball: Option<BallObs>,
    pub posts: Vec<[f64; 2]>,
    pub obstacles: Vec<ObstacleObs>,
    pub crossings: Vec<CrossingObs>,
    /// convex hull of the visible field in pixel coordinates
    pub field_hull: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseBelief {
    pub pose: Pose2,
    /// in (0, 1]; higher means a tighter particle cloud
    pub confidence: f64,
    /// row-major 3×3 covariance over (x, y, θ)
    pub covariance: [f64; 9],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GaitCommand {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    pub walk: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Gaze {
    /// rad, positive to the left
    pub azimuth: f64,
    /// rad, positive up
    pub elevation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadeState {
    #[default]
    Relaxed,
    Fading,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallState {
    #[default]
    Ok,
    Relaxed,
    GetupProne,
    GetupSupine,
    Recovered,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionStatus {
    pub fade: FadeState,
    pub effort: f64,
    pub fall: FallState,
    pub playing: Option<String>,
    /// fraction of the playing motion already executed
    pub progress: f64,
    pub walking: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GamePhase {
    #[default]
    Initial,
    Ready,
    Set,
    Playing,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GameInfo {
    pub phase: GamePhase,
    /// goals scored by (us, them)
    pub score: [u32; 2],
    pub remaining: f64,
    #[serde(default)]
    pub penalized: bool,
    /// we take the next kickoff
    #[serde(default)]
    pub kickoff: bool,
}

/// Packed YUV image, three bytes per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImageMsg {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

/// Ground truth published by the simulator for logging and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldTruth {
    pub robot: Pose2,
    pub ball: [f64; 2],
    pub ball_velocity: [f64; 2],
    pub trunk_rpy: [f64; 3],
    /// trunk angular velocity in the trunk frame, rad/s
    pub trunk_rate: [f64; 3],
    pub fallen: bool,
    pub score: [u32; 2],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_keeps_floats_exact() {
        let m = Message::Particles(vec![[0.1, -2.0 / 3.0, std::f64::consts::PI]]);
        let text = serde_json::to_string(&m).unwrap();
        let back: Message = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
        assert_eq!(back.schema(), "particles");
    }

    #[test]
    fn schema_matches_serde_tag() {
        let samples = [
            Message::Empty,
            Message::Gaze(Gaze::default()),
            Message::MotionRequest { name: "kick".into() },
            Message::WorldTruth(WorldTruth::default()),
        ];
        for m in samples {
            let v = serde_json::to_value(&m).unwrap();
            assert_eq!(v["kind"], m.schema());
        }
    }
}
