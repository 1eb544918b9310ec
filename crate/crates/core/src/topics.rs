//! Well-known topic and service names.

pub const JOINT_STATES: &str = "/joint_states";
pub const JOINT_COMMANDS: &str = "/joint_commands";
pub const IMU: &str = "/imu";
pub const ATTITUDE: &str = "/attitude";
pub const MOTION_STATUS: &str = "/motion/status";
pub const ODOMETRY: &str = "/odometry";
pub const GAIT_COMMAND: &str = "/gait/command";
pub const GAZE: &str = "/head/gaze";
pub const MOTION_PLAY: &str = "/motion/play";
pub const FADE: &str = "/control/fade";
pub const DETECTIONS: &str = "/vision/detections";
pub const CAMERA_IMAGE: &str = "/vision/image";
pub const DOWNSCALED_IMAGE: &str = "/vision/image_small";
pub const POSE_BELIEF: &str = "/pose_belief";
pub const PARTICLES: &str = "/localization/particles";
pub const GAME_STATE: &str = "/game_state";
pub const SIM_TRUTH: &str = "/sim/truth";
pub const ACTIVATIONS: &str = "/behavior/activations";
pub const DIAGNOSTICS: &str = "/diagnostics";
pub const CONFIG_CHANGES: &str = "/config/changes";

pub const SRV_FADE: &str = "/control/fade";
pub const SRV_RESET: &str = "/control/reset";
pub const SRV_MOTION_PLAY: &str = "/motion/play";
pub const SRV_SCENARIO: &str = "/sim/control";
