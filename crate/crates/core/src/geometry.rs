//! Planar pose helpers shared by the simulator, localization and behaviors.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Pose on the field plane: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// Expresses a world point in this pose's local (egocentric) frame.
    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Maps a local point back to world coordinates.
    pub fn to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Applies a body-frame increment `(dx, dy, dθ)`.
    pub fn advance(&self, dx: f64, dy: f64, dtheta: f64) -> Pose2 {
        let [x, y] = self.to_world([dx, dy]);
        Pose2::new(x, y, wrap_angle(self.theta + dtheta))
    }

    /// Rotation by 180° about the field center.
    pub fn rotated_half_turn(&self) -> Pose2 {
        Pose2::new(-self.x, -self.y, wrap_angle(self.theta + PI))
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.1 + 4.0 * TAU) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn local_world_roundtrip() {
        let pose = Pose2::new(1.0, -2.0, 0.7);
        let p = [3.0, 0.5];
        let back = pose.to_world(pose.to_local(p));
        assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
        let ahead = Pose2::new(0.0, 0.0, PI / 2.0).to_local([0.0, 1.0]);
        assert!((ahead[0] - 1.0).abs() < 1e-12 && ahead[1].abs() < 1e-12);
    }
}
