//! Open-loop central pattern generator gait.
//!
//! A single phase variable drives both legs half a cycle apart. Each leg
//! shortens sinusoidally during its swing half, swings in the commanded
//! direction and pushes back during support; the arms counter-swing. The
//! gait performs no balance feedback; odometry is the integral of the
//! clamped command.

use super::{joint_indices, Blackboard, MotionContext, MotionError, MotionModule};
use crate::config::{ConfigServer, ParamHandle};
use crate::geometry::Pose2;
use crate::messages::GaitCommand;
use crate::model::RobotModel;
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitParams {
    /// full gait cycles per second
    pub frequency: f64,
    pub max_vx: f64,
    pub max_vy: f64,
    pub max_omega: f64,
    /// leg shortening amplitude (rad of hip flexion)
    pub lift: f64,
    /// rad of leg swing per m/s forward
    pub gain_x: f64,
    /// rad of hip roll per m/s sideways
    pub gain_y: f64,
    /// rad of hip yaw per rad/s turn
    pub gain_omega: f64,
    /// lateral body sway, rad
    pub sway: f64,
    /// arm swing relative to leg swing
    pub arm_gain: f64,
    /// swing amplitudes follow the command at this many full ranges per second
    pub amplitude_rate: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            frequency: 1.0,
            max_vx: 0.25,
            max_vy: 0.15,
            max_omega: 0.6,
            lift: 0.25,
            gain_x: 1.2,
            gain_y: 1.0,
            gain_omega: 0.6,
            sway: 0.05,
            arm_gain: 0.8,
            amplitude_rate: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitState {
    /// left-leg phase in [0, 2π); the left leg swings while sin φ > 0
    pub phase: f64,
    pub walking: bool,
    /// stepping out after walk was switched off, until the next double support
    pub halting: bool,
    /// smoothed (vx, vy, ω) amplitudes shaping the leg pattern
    pub amplitude: [f64; 3],
}

impl Default for GaitState {
    fn default() -> Self {
        Self {
            phase: 0.0,
            walking: false,
            halting: false,
            amplitude: [0.0; 3],
        }
    }
}

impl GaitState {
    pub fn support_leg(&self) -> Leg {
        if self.phase.sin() > 0.0 {
            Leg::Right
        } else {
            Leg::Left
        }
    }

    pub fn active(&self) -> bool {
        self.walking || self.halting
    }
}

/// Joint targets for the walking limbs.
///
/// Legs: hip yaw, hip roll, hip pitch, knee, ankle pitch, ankle roll.
/// Arms: shoulder pitch, shoulder roll, elbow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbPose {
    pub left_leg: [f64; 6],
    pub right_leg: [f64; 6],
    pub left_arm: [f64; 3],
    pub right_arm: [f64; 3],
}

/// Posture the gait returns to when halted.
pub const HALT_POSE: LimbPose = LimbPose {
    left_leg: [0.0, 0.0, -0.3, 0.6, -0.3, 0.0],
    right_leg: [0.0, 0.0, -0.3, 0.6, -0.3, 0.0],
    left_arm: [0.0, 0.1, -0.4],
    right_arm: [0.0, -0.1, -0.4],
};

pub fn clamp_command(cmd: &GaitCommand, p: &GaitParams) -> GaitCommand {
    GaitCommand {
        vx: cmd.vx.clamp(-p.max_vx, p.max_vx),
        vy: cmd.vy.clamp(-p.max_vy, p.max_vy),
        omega: cmd.omega.clamp(-p.max_omega, p.max_omega),
        walk: cmd.walk,
    }
}

fn leg_pattern(psi: f64, side: f64, amp: [f64; 3], p: &GaitParams, base: [f64; 6]) -> [f64; 6] {
    let s = psi.sin();
    let c = psi.cos();
    let lift = if s > 0.0 { p.lift * s } else { 0.0 };
    let swing_x = p.gain_x * amp[0] * c;
    let swing_y = p.gain_y * amp[1] * c;
    let roll = side * p.sway * s + swing_y;
    [
        base[0] + p.gain_omega * amp[2] * c,
        base[1] + roll,
        base[2] - lift + swing_x,
        base[3] + 2.0 * lift,
        base[4] - lift - swing_x,
        base[5] - roll,
    ]
}

/// Limb targets for a given phase and amplitude.
pub fn limb_pose(phase: f64, amplitude: [f64; 3], p: &GaitParams) -> LimbPose {
    let left = leg_pattern(phase, 1.0, amplitude, p, HALT_POSE.left_leg);
    let right = leg_pattern(phase + PI, -1.0, amplitude, p, HALT_POSE.right_leg);
    let arm = |psi: f64, base: [f64; 3]| {
        let mut a = base;
        a[0] -= p.arm_gain * p.gain_x * amplitude[0] * psi.cos();
        a
    };
    LimbPose {
        left_leg: left,
        right_leg: right,
        left_arm: arm(phase, HALT_POSE.left_arm),
        right_arm: arm(phase + PI, HALT_POSE.right_arm),
    }
}

/// Advances the gait by `dt`. Returns limb targets and the body-frame
/// odometry increment `(dx, dy, dθ)`.
pub fn gait_step(cmd: &GaitCommand, state: &mut GaitState, p: &GaitParams, dt: f64) -> (LimbPose, (f64, f64, f64)) {
    let cmd = clamp_command(cmd, p);
    if cmd.walk {
        state.walking = true;
        state.halting = false;
    } else if state.walking {
        state.walking = false;
        state.halting = true;
    }
    let target = if state.walking {
        [cmd.vx, cmd.vy, cmd.omega]
    } else {
        [0.0; 3]
    };
    let limits = [p.max_vx, p.max_vy, p.max_omega];
    for ((a, t), lim) in state.amplitude.iter_mut().zip(target).zip(limits) {
        let step = p.amplitude_rate * lim * dt;
        *a += (t - *a).clamp(-step, step);
    }
    if state.active() {
        let before = state.phase;
        let after = before + TAU * p.frequency * dt;
        if state.halting {
            // double support happens at phase 0 and π
            let crossed = (before < PI && after >= PI) || after >= TAU;
            if crossed && state.amplitude.iter().all(|a| a.abs() < 1e-9) {
                state.phase = if after >= TAU { 0.0 } else { PI };
                state.halting = false;
                return (limb_pose(state.phase, state.amplitude, p), (0.0, 0.0, 0.0));
            }
        }
        state.phase = after.rem_euclid(TAU);
    }
    let odom = if state.walking {
        (cmd.vx * dt, cmd.vy * dt, cmd.omega * dt)
    } else {
        (0.0, 0.0, 0.0)
    };
    let pose = if state.active() {
        limb_pose(state.phase, state.amplitude, p)
    } else {
        HALT_POSE
    };
    (pose, odom)
}

/// Integrates a body-frame increment into a cumulative odometry pose.
pub fn integrate_odometry(odom: Pose2, inc: (f64, f64, f64)) -> Pose2 {
    odom.advance(inc.0, inc.1, inc.2)
}

struct Params {
    frequency: ParamHandle,
    max_vx: ParamHandle,
    max_vy: ParamHandle,
    max_omega: ParamHandle,
    lift: ParamHandle,
}

pub struct GaitModule {
    state: GaitState,
    params: Params,
    legs: [Vec<usize>; 2],
    arms: [Vec<usize>; 2],
}

impl GaitModule {
    pub fn new(model: &RobotModel, config: &ConfigServer) -> Result<Self, MotionError> {
        let d = GaitParams::default();
        let params = Params {
            frequency: config.float("/gait/frequency", d.frequency, 0.2, 3.0)?,
            max_vx: config.float("/gait/maxVelX", d.max_vx, 0.0, 1.0)?,
            max_vy: config.float("/gait/maxVelY", d.max_vy, 0.0, 1.0)?,
            max_omega: config.float("/gait/maxVelTheta", d.max_omega, 0.0, 2.0)?,
            lift: config.float("/gait/lift", d.lift, 0.0, 0.6)?,
        };
        let names =
            |side: &str, parts: &[&str]| -> Vec<String> { parts.iter().map(|p| format!("{side}_{p}")).collect() };
        let leg = [
            "hip_yaw",
            "hip_roll",
            "hip_pitch",
            "knee_pitch",
            "ankle_pitch",
            "ankle_roll",
        ];
        let arm = ["shoulder_pitch", "shoulder_roll", "elbow_pitch"];
        Ok(Self {
            state: GaitState::default(),
            params,
            legs: [
                joint_indices(model, &names("l", &leg))?,
                joint_indices(model, &names("r", &leg))?,
            ],
            arms: [
                joint_indices(model, &names("l", &arm))?,
                joint_indices(model, &names("r", &arm))?,
            ],
        })
    }

    fn current_params(&self) -> GaitParams {
        GaitParams {
            frequency: self.params.frequency.f64(),
            max_vx: self.params.max_vx.f64(),
            max_vy: self.params.max_vy.f64(),
            max_omega: self.params.max_omega.f64(),
            lift: self.params.lift.f64(),
            ..GaitParams::default()
        }
    }

    pub fn state(&self) -> &GaitState {
        &self.state
    }
}

impl MotionModule for GaitModule {
    fn name(&self) -> &str {
        "gait"
    }

    fn step(&mut self, ctx: &MotionContext, bb: &mut Blackboard) -> Result<(), String> {
        if bb.suppress_gait || bb.playing.is_some() {
            self.state = GaitState::default();
            bb.walking = false;
            return Ok(());
        }
        let p = self.current_params();
        let (pose, inc) = gait_step(&ctx.gait_command, &mut self.state, &p, ctx.dt);
        bb.odometry = integrate_odometry(bb.odometry, inc);
        bb.walking = self.state.walking;
        for (idx, vals) in [
            (&self.legs[0], &pose.left_leg[..]),
            (&self.legs[1], &pose.right_leg[..]),
        ] {
            for (&j, &v) in idx.iter().zip(vals) {
                bb.q_des[j] = v;
            }
        }
        for (idx, vals) in [
            (&self.arms[0], &pose.left_arm[..]),
            (&self.arms[1], &pose.right_arm[..]),
        ] {
            for (&j, &v) in idx.iter().zip(vals) {
                bb.q_des[j] = v;
            }
        }
        Ok(())
    }
}
