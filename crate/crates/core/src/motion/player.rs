//! Keyframe motion player.

use super::keyframe::{Keyframe, KeyframeMotion, MotionLibrary, PlannedMotion};
use super::{joint_indices, Blackboard, MotionContext, MotionModule};
use crate::model::RobotModel;

struct Active {
    name: String,
    plan: PlannedMotion,
    start: f64,
    joints: Vec<usize>,
}

pub struct MotionPlayer {
    model: RobotModel,
    library: MotionLibrary,
    active: Option<Active>,
}

impl MotionPlayer {
    pub fn new(model: &RobotModel, library: MotionLibrary) -> Self {
        Self {
            model: model.clone(),
            library,
            active: None,
        }
    }

    pub fn library(&self) -> &MotionLibrary {
        &self.library
    }

    fn start(&mut self, name: &str, ctx: &MotionContext) -> Result<(), String> {
        let motion = self
            .library
            .get(name)
            .ok_or_else(|| format!("motion player: unknown motion `{name}`"))?;
        let joints = joint_indices(&self.model, &motion.joints).map_err(|e| e.to_string())?;
        let mut motion: KeyframeMotion = motion.clone();
        if motion.keyframes[0].t > 0.0 {
            // start from wherever the robot is now
            let position = joints.iter().map(|&j| ctx.feedback.q[j]).collect();
            motion.keyframes.insert(
                0,
                Keyframe {
                    t: 0.0,
                    position,
                    velocity: vec![0.0; joints.len()],
                    effort: None,
                },
            );
        }
        let plan = PlannedMotion::new(motion).map_err(|e| format!("motion `{name}`: {e}"))?;
        self.active = Some(Active {
            name: name.to_string(),
            plan,
            start: ctx.time,
            joints,
        });
        Ok(())
    }
}

impl MotionModule for MotionPlayer {
    fn name(&self) -> &str {
        "motion_player"
    }

    fn step(&mut self, ctx: &MotionContext, bb: &mut Blackboard) -> Result<(), String> {
        bb.finished = None;
        let requests: Vec<String> = bb.requests.drain(..).collect();
        if let Some(forced) = bb.forced_request.take() {
            if let Err(e) = self.start(&forced, ctx) {
                bb.errors.push(e);
            }
        } else if bb.relax {
            self.active = None;
        } else if let Some(name) = requests.first() {
            if self.active.is_none() {
                if let Err(e) = self.start(name, ctx) {
                    bb.errors.push(e);
                }
            } else {
                log::debug!("motion `{name}` ignored, another motion is playing");
            }
        }
        let Some(active) = &self.active else {
            bb.playing = None;
            bb.progress = 0.0;
            return Ok(());
        };
        let end = active.plan.end_time();
        let t = (ctx.time - active.start).clamp(0.0, end);
        let sample = active.plan.sample(t).map_err(|e| e.to_string())?;
        for (k, &j) in active.joints.iter().enumerate() {
            bb.q_des[j] = sample.position[k];
            bb.qdot_des[j] = sample.velocity[k];
            bb.effort[j] *= sample.effort[k];
        }
        bb.progress = if end > 0.0 { t / end } else { 1.0 };
        if t >= end {
            bb.finished = Some(active.name.clone());
            bb.playing = None;
            self.active = None;
        } else {
            bb.playing = Some(active.name.clone());
        }
        Ok(())
    }
}
