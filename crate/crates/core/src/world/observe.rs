//! Observation synthesis: noisy egocentric detections straight from the
//! world state, or camera frames for the full vision pipeline.

use super::World;
use crate::geometry::wrap_angle;
use crate::messages::{BallObs, CrossingObs, DetectionSet, ObstacleObs};
use crate::perception::Scene;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    #[default]
    Geometric,
    Rendered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationParams {
    /// horizontal field of view centered on the head yaw, rad
    pub fov: f64,
    /// m, for ball, posts and obstacles
    pub max_range: f64,
    /// m, line crossings are only resolved closer than this
    pub crossing_range: f64,
    /// σ of landmark (post, crossing) positions, m
    pub landmark_noise: f64,
    /// ball and obstacle position σ = ball_noise[0] + ball_noise[1]·range
    pub ball_noise: [f64; 2],
    /// observation rate, Hz
    pub rate: f64,
}

impl Default for ObservationParams {
    fn default() -> Self {
        Self {
            fov: PI,
            max_range: 6.0,
            crossing_range: 3.5,
            landmark_noise: 0.3,
            ball_noise: [0.01, 0.03],
            rate: 25.0,
        }
    }
}

impl ObservationParams {
    pub fn noiseless() -> Self {
        Self {
            landmark_noise: 0.0,
            ball_noise: [0.0, 0.0],
            ..Self::default()
        }
    }
}

fn visible(local: [f64; 2], head_yaw: f64, fov: f64, range: f64) -> bool {
    let d = local[0].hypot(local[1]);
    d <= range && wrap_angle(local[1].atan2(local[0]) - head_yaw).abs() < fov / 2.0
}

fn noisy<R: Rng>(rng: &mut R, p: [f64; 2], sigma: f64) -> [f64; 2] {
    match Normal::new(0.0, sigma) {
        Ok(n) if sigma > 0.0 => [p[0] + n.sample(rng), p[1] + n.sample(rng)],
        _ => p,
    }
}

/// Egocentric detections of every object inside the view cone.
pub fn geometric_observations<R: Rng>(
    world: &World,
    head_yaw: f64,
    p: &ObservationParams,
    rng: &mut R,
) -> DetectionSet {
    let robot = world.robot;
    let mut out = DetectionSet::default();
    let ball = robot.to_local(world.ball);
    if visible(ball, head_yaw, p.fov, p.max_range) {
        let range = ball[0].hypot(ball[1]);
        out.ball = Some(BallObs {
            position: noisy(rng, ball, p.ball_noise[0] + p.ball_noise[1] * range),
            pixel: [0.0, 0.0],
            confidence: 1.0,
        });
    }
    for post in world.field.goal_posts() {
        let l = robot.to_local(post);
        if visible(l, head_yaw, p.fov, p.max_range) {
            out.posts.push(noisy(rng, l, p.landmark_noise));
        }
    }
    for c in world.field.crossings() {
        let l = robot.to_local(c.position);
        if visible(l, head_yaw, p.fov, p.crossing_range) {
            out.crossings.push(CrossingObs {
                position: noisy(rng, l, p.landmark_noise),
                kind: c.kind,
            });
        }
    }
    for o in &world.obstacles {
        let l = robot.to_local(o.position);
        if visible(l, head_yaw, p.fov, p.max_range) {
            let range = l[0].hypot(l[1]);
            out.obstacles.push(ObstacleObs {
                position: noisy(rng, l, p.ball_noise[0] + p.ball_noise[1] * range),
                width: 2.0 * o.radius,
            });
        }
    }
    out
}

/// Scene description for rendering the world from the robot's camera.
pub fn scene_of(world: &World) -> Scene {
    Scene {
        field: world.field,
        robot: world.robot,
        ball: Some(world.ball),
        obstacles: world.obstacles.clone(),
        posts: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;
    use crate::geometry::Pose2;
    use crate::world::{RefereeParams, SimParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cone_and_exact_ball() {
        let mut w = World::new(
            FieldSpec::default(),
            SimParams::default(),
            RefereeParams::default(),
            Pose2::new(0.0, 0.0, 0.0),
            [1.0, 0.0],
            0,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ObservationParams::noiseless();
        let d = geometric_observations(&w, 0.0, &p, &mut rng);
        assert_eq!(d.ball.unwrap().position, [1.0, 0.0]);
        w.ball = [-1.0, 0.0];
        assert!(geometric_observations(&w, 0.0, &p, &mut rng).ball.is_none());
        assert!(geometric_observations(&w, 2.0, &p, &mut rng).ball.is_some());
    }

    #[test]
    fn noiseless_detections_invert_to_world() {
        let w = World::new(
            FieldSpec::default(),
            SimParams::default(),
            RefereeParams::default(),
            Pose2::new(1.0, -0.5, 0.3),
            [2.0, 0.5],
            0,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = geometric_observations(&w, 0.0, &ObservationParams::noiseless(), &mut rng);
        assert_eq!(d.posts.len(), 2);
        for post in &d.posts {
            let g = w.robot.to_world(*post);
            assert!(w
                .field
                .goal_posts()
                .iter()
                .any(|p| (p[0] - g[0]).hypot(p[1] - g[1]) < 1e-12));
        }
        let b = w.robot.to_world(d.ball.unwrap().position);
        assert!((b[0] - 2.0).hypot(b[1] - 0.5) < 1e-12);
    }
}
