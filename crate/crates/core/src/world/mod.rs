//! Kinematic soccer world used as the plant in simulation: robot pose from
//! gait odometry with slip, rolling ball, static obstacles, referee, trunk
//! attitude with scripted falls, and observation synthesis.

pub mod observe;
pub mod referee;
pub mod scenario;

pub use observe::{geometric_observations, ObservationMode, ObservationParams};
pub use referee::{Referee, RefereeEvent, RefereeParams};
pub use scenario::{Scenario, ScenarioError, ScenarioEvent, SuccessCriterion};

use crate::field::FieldSpec;
use crate::geometry::Pose2;
use crate::messages::{GamePhase, WorldTruth};
use crate::perception::Obstacle;
use nalgebra::UnitQuaternion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// multiplicative σ on the (dx, dy, dθ) odometry increment
    pub slip: [f64; 3],
    /// ball deceleration, m/s²
    pub ball_friction: f64,
    /// robot-ball center distance at which walking pushes the ball, m
    pub contact_radius: f64,
    /// extra speed given to a pushed ball, m/s
    pub push_epsilon: f64,
    pub kick_speed: f64,
    /// ball region (robot frame) in which a kick connects
    pub kick_x: [f64; 2],
    pub kick_y: f64,
    /// roll amplitude while walking, rad
    pub wobble: f64,
    /// s from upright to lying after a fall is injected
    pub fall_duration: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            slip: [0.05; 3],
            ball_friction: 0.8,
            contact_radius: 0.2,
            push_epsilon: 0.05,
            kick_speed: 2.5,
            kick_x: [0.03, 0.35],
            kick_y: 0.18,
            wobble: 0.02,
            fall_duration: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallDirection {
    Forward,
    Backward,
    Left,
    Right,
}

impl FallDirection {
    fn lying_rpy(self) -> [f64; 3] {
        match self {
            FallDirection::Forward => [0.0, FRAC_PI_2, 0.0],
            FallDirection::Backward => [0.0, -FRAC_PI_2, 0.0],
            FallDirection::Left => [-FRAC_PI_2, 0.0, 0.0],
            FallDirection::Right => [FRAC_PI_2, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Posture {
    Upright,
    Falling { start: f64, to: [f64; 3] },
    Lying { rpy: [f64; 3] },
    Rising { from: [f64; 3] },
}

/// Per-step inputs from the robot side.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInput {
    /// commanded odometry increment in the robot frame
    pub odometry: (f64, f64, f64),
    pub walking: bool,
    /// kick impact happened this step
    pub kick: bool,
    /// fraction of a get-up motion completed, when one is playing
    pub getup_progress: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub params: SimParams,
    pub field: FieldSpec,
    pub time: f64,
    pub robot: Pose2,
    pub ball: [f64; 2],
    pub ball_velocity: [f64; 2],
    pub obstacles: Vec<Obstacle>,
    pub referee: Referee,
    kickoff_robot: Pose2,
    kickoff_ball: [f64; 2],
    posture: Posture,
    rpy: [f64; 3],
    rate: [f64; 3],
    walk_phase: f64,
    rng: ChaCha8Rng,
    /// set once a fall has been injected and the robot is back on its feet
    pub recoveries: u32,
    pub falls: u32,
}

impl World {
    pub fn new(
        field: FieldSpec,
        params: SimParams,
        referee: RefereeParams,
        robot: Pose2,
        ball: [f64; 2],
        seed: u64,
    ) -> Self {
        Self {
            params,
            field,
            time: 0.0,
            robot,
            ball,
            ball_velocity: [0.0; 2],
            obstacles: Vec::new(),
            referee: Referee::new(referee),
            kickoff_robot: robot,
            kickoff_ball: ball,
            posture: Posture::Upright,
            rpy: [0.0; 3],
            rate: [0.0; 3],
            walk_phase: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            recoveries: 0,
            falls: 0,
        }
    }

    pub fn fallen(&self) -> bool {
        !matches!(self.posture, Posture::Upright)
    }

    pub fn trunk_rpy(&self) -> [f64; 3] {
        self.rpy
    }

    pub fn inject_fall(&mut self, direction: FallDirection) {
        if matches!(self.posture, Posture::Upright) {
            self.falls += 1;
            self.posture = Posture::Falling {
                start: self.time,
                to: direction.lying_rpy(),
            };
        }
    }

    pub fn truth(&self) -> WorldTruth {
        WorldTruth {
            robot: self.robot,
            ball: self.ball,
            ball_velocity: self.ball_velocity,
            trunk_rpy: self.rpy,
            trunk_rate: self.rate,
            fallen: self.fallen(),
            score: self.referee.score(),
        }
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).map(|n| n.sample(&mut self.rng)).unwrap_or(0.0)
        } else {
            0.0
        }
    }

    pub fn step(&mut self, dt: f64, input: &StepInput) -> RefereeEvent {
        let p = self.params;
        let before = self.robot;
        let playing = self.referee.phase() == GamePhase::Playing;
        if !self.fallen() {
            let (dx, dy, dth) = input.odometry;
            let slip = [self.gauss(p.slip[0]), self.gauss(p.slip[1]), self.gauss(p.slip[2])];
            self.robot = self
                .robot
                .advance(dx * (1.0 + slip[0]), dy * (1.0 + slip[1]), dth * (1.0 + slip[2]));
        }
        self.update_posture(dt, input);

        // ball: constant deceleration, then contact and kick events
        let speed = self.ball_velocity[0].hypot(self.ball_velocity[1]);
        if speed > 0.0 {
            let new_speed = (speed - p.ball_friction * dt).max(0.0);
            let avg = 0.5 * (speed + new_speed);
            for k in 0..2 {
                let dir = self.ball_velocity[k] / speed;
                self.ball[k] += dir * avg * dt;
                self.ball_velocity[k] = dir * new_speed;
            }
        }
        if !self.fallen() && (input.walking || input.kick) {
            self.contact(before, dt);
        }
        if input.kick && !self.fallen() {
            let local = self.robot.to_local(self.ball);
            if (p.kick_x[0]..=p.kick_x[1]).contains(&local[0]) && local[1].abs() <= p.kick_y {
                let (s, c) = self.robot.theta.sin_cos();
                self.ball_velocity = [p.kick_speed * c, p.kick_speed * s];
            }
        }
        let event = self.referee.step(dt, self.time + dt, self.ball, &self.field);
        self.clamp_ball();
        self.time += dt;
        if let RefereeEvent::Goal(_) = event {
            self.robot = self.kickoff_robot;
            self.ball = self.kickoff_ball;
            self.ball_velocity = [0.0; 2];
        }
        if !playing && self.referee.phase() != GamePhase::Playing {
            // the ball is held still before kickoff
            self.ball_velocity = [0.0; 2];
        }
        event
    }

    fn contact(&mut self, before: Pose2, dt: f64) {
        let p = self.params;
        let (dx, dy) = (self.ball[0] - self.robot.x, self.ball[1] - self.robot.y);
        let dist = dx.hypot(dy);
        if dist >= p.contact_radius || dist == 0.0 {
            return;
        }
        let (ux, uy) = (dx / dist, dy / dist);
        let (vx, vy) = ((self.robot.x - before.x) / dt, (self.robot.y - before.y) / dt);
        let approach = vx * ux + vy * uy;
        if approach <= 0.0 {
            return;
        }
        self.ball = [
            self.robot.x + ux * p.contact_radius,
            self.robot.y + uy * p.contact_radius,
        ];
        let along = self.ball_velocity[0] * ux + self.ball_velocity[1] * uy;
        let push = approach + p.push_epsilon;
        if along < push {
            self.ball_velocity = [ux * push, uy * push];
        }
    }

    fn clamp_ball(&mut self) {
        let lim = [
            self.field.half_length() + self.field.border,
            self.field.half_width() + self.field.border,
        ];
        for k in 0..2 {
            if self.ball[k].abs() > lim[k] {
                self.ball[k] = self.ball[k].clamp(-lim[k], lim[k]);
                self.ball_velocity[k] = 0.0;
            }
        }
    }

    fn update_posture(&mut self, dt: f64, input: &StepInput) {
        let prev = self.rpy;
        match self.posture {
            Posture::Upright => {
                if input.walking {
                    self.walk_phase += dt * std::f64::consts::TAU;
                    self.rpy = [self.params.wobble * self.walk_phase.sin(), 0.0, 0.0];
                } else {
                    self.rpy = [0.0; 3];
                }
            }
            Posture::Falling { start, to } => {
                let s = ((self.time + dt - start) / self.params.fall_duration).clamp(0.0, 1.0);
                // accelerating topple
                let e = s * s;
                self.rpy = [to[0] * e, to[1] * e, 0.0];
                if s >= 1.0 {
                    self.posture = Posture::Lying { rpy: to };
                }
            }
            Posture::Lying { rpy } => {
                self.rpy = rpy;
                if let Some(progress) = input.getup_progress {
                    if progress > 0.0 {
                        self.posture = Posture::Rising { from: rpy };
                    }
                }
            }
            Posture::Rising { from } => match input.getup_progress {
                Some(progress) if progress < 1.0 => {
                    let k = 1.0 - progress.clamp(0.0, 1.0);
                    self.rpy = [from[0] * k, from[1] * k, 0.0];
                }
                _ => {
                    self.rpy = [0.0; 3];
                    self.posture = Posture::Upright;
                    self.recoveries += 1;
                }
            },
        }
        let q0 = UnitQuaternion::from_euler_angles(prev[0], prev[1], prev[2]);
        let q1 = UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]);
        self.rate = ((q0.inverse() * q1).scaled_axis() / dt).into();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> World {
        let params = SimParams {
            slip: [0.0; 3],
            ..SimParams::default()
        };
        World::new(
            FieldSpec::default(),
            params,
            RefereeParams::default(),
            Pose2::new(-1.0, 0.0, 0.0),
            [0.0, 0.0],
            3,
        )
    }

    #[test]
    fn rolling_ball_stops_at_v2_over_2mu() {
        let mut w = world();
        // skip to PLAYING so the ball is free
        let idle = StepInput::default();
        while w.referee.phase() != GamePhase::Playing {
            w.step(0.01, &idle);
        }
        w.ball = [-2.0, 0.0];
        w.ball_velocity = [2.0, 0.0];
        let t0 = w.time;
        let mut last = 2.0;
        while w.ball_velocity[0] > 0.0 {
            w.step(0.001, &idle);
            assert!(w.ball_velocity[0] <= last);
            last = w.ball_velocity[0];
        }
        assert!((w.time - t0 - 2.5).abs() < 2e-3);
        assert!((w.ball[0] + 2.0 - 2.5).abs() < 1e-3, "{}", w.ball[0]);
    }

    #[test]
    fn noiseless_pose_follows_odometry() {
        let mut w = world();
        let input = StepInput {
            odometry: (0.01, 0.002, 0.01),
            walking: true,
            ..StepInput::default()
        };
        let mut expect = w.robot;
        for _ in 0..100 {
            w.step(0.008, &input);
            expect = expect.advance(0.01, 0.002, 0.01);
        }
        assert_eq!(w.robot, expect);
    }

    #[test]
    fn kick_sets_ball_speed_along_heading() {
        let mut w = world();
        w.robot = Pose2::new(0.0, 0.0, 0.5);
        w.ball = w.robot.to_world([0.18, 0.05]);
        w.step(
            0.008,
            &StepInput {
                kick: true,
                ..StepInput::default()
            },
        );
        // ball is held before kickoff, so test the event during play
        let mut w2 = world();
        while w2.referee.phase() != GamePhase::Playing {
            w2.step(0.01, &StepInput::default());
        }
        w2.robot = Pose2::new(0.0, 0.0, 0.5);
        w2.ball = w2.robot.to_world([0.18, 0.05]);
        w2.step(
            1e-6,
            &StepInput {
                kick: true,
                ..StepInput::default()
            },
        );
        let v = w2.ball_velocity;
        assert!((v[0].hypot(v[1]) - 2.5).abs() < 1e-4);
        assert!((v[1].atan2(v[0]) - 0.5).abs() < 1e-9);
        assert_eq!(w.ball_velocity, [0.0, 0.0]);
    }

    #[test]
    fn fall_and_recovery() {
        let mut w = world();
        w.inject_fall(FallDirection::Forward);
        for _ in 0..100 {
            w.step(0.01, &StepInput::default());
        }
        assert!(w.fallen());
        assert!((w.trunk_rpy()[1] - FRAC_PI_2).abs() < 1e-12);
        for k in 0..=10 {
            w.step(
                0.01,
                &StepInput {
                    getup_progress: Some(k as f64 / 10.0),
                    ..StepInput::default()
                },
            );
        }
        w.step(0.01, &StepInput::default());
        assert!(!w.fallen());
        assert_eq!(w.recoveries, 1);
    }
}
