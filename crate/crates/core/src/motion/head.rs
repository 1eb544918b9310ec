//! Slew-limited gaze control of the two neck joints.

use super::{Blackboard, MotionContext, MotionError, MotionModule};
use crate::config::{ConfigServer, ParamHandle};
use crate::messages::Gaze;
use crate::model::{JointLimits, RobotModel};

/// Neck joint targets for a gaze direction, moving at most `slew·dt` per axis.
///
/// Positive elevation looks up, which is negative neck pitch.
pub fn head_step(
    current: (f64, f64),
    target: Gaze,
    slew: f64,
    dt: f64,
    yaw: &JointLimits,
    pitch: &JointLimits,
) -> (f64, f64) {
    let max = slew * dt;
    let goal_yaw = target.azimuth.clamp(yaw.lower, yaw.upper);
    let goal_pitch = (-target.elevation).clamp(pitch.lower, pitch.upper);
    (
        current.0 + (goal_yaw - current.0).clamp(-max, max),
        current.1 + (goal_pitch - current.1).clamp(-max, max),
    )
}

pub struct HeadModule {
    yaw: usize,
    pitch: usize,
    limits: (JointLimits, JointLimits),
    slew: ParamHandle,
    current: (f64, f64),
}

impl HeadModule {
    pub fn new(model: &RobotModel, config: &ConfigServer) -> Result<Self, MotionError> {
        let yaw = model
            .joint_index("neck_yaw")
            .map_err(|_| MotionError::MissingJoint("neck_yaw".into()))?;
        let pitch = model
            .joint_index("neck_pitch")
            .map_err(|_| MotionError::MissingJoint("neck_pitch".into()))?;
        Ok(Self {
            yaw,
            pitch,
            limits: (model.joints[yaw].limits, model.joints[pitch].limits),
            slew: config.float("/head/slew", 3.0, 0.1, 20.0)?,
            current: (0.0, 0.0),
        })
    }
}

impl MotionModule for HeadModule {
    fn name(&self) -> &str {
        "head"
    }

    fn step(&mut self, ctx: &MotionContext, bb: &mut Blackboard) -> Result<(), String> {
        self.current = head_step(
            self.current,
            ctx.gaze,
            self.slew.f64(),
            ctx.dt,
            &self.limits.0,
            &self.limits.1,
        );
        bb.q_des[self.yaw] = self.current.0;
        bb.q_des[self.pitch] = self.current.1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lim(lower: f64, upper: f64) -> JointLimits {
        JointLimits {
            lower,
            upper,
            velocity: 5.0,
            acceleration: 10.0,
            torque: 5.0,
        }
    }

    #[test]
    fn slew_and_clamp() {
        let (y, p) = (lim(-2.0, 2.0), lim(-0.6, 1.3));
        let still = head_step((0.0, 0.0), Gaze::default(), 2.0, 0.008, &y, &p);
        assert_eq!(still, (0.0, 0.0));
        let moved = head_step(
            (0.0, 0.0),
            Gaze {
                azimuth: 1.0,
                elevation: 0.0,
            },
            2.0,
            0.008,
            &y,
            &p,
        );
        assert!((moved.0 - 0.016).abs() < 1e-15);
        let mut cur = (0.0, 0.0);
        for _ in 0..1000 {
            cur = head_step(
                cur,
                Gaze {
                    azimuth: 3.0,
                    elevation: -3.0,
                },
                2.0,
                0.008,
                &y,
                &p,
            );
        }
        assert_eq!(cur, (2.0, 1.3));
    }
}
