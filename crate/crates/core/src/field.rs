//! Soccer field geometry: dimensions, line segments, landmarks.
//!
//! Field frame: origin at the center spot, x toward the opponent goal,
//! y to the left, z up. All dimensions in meters.

use crate::messages::CrossingKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSpec {
    pub length: f64,
    pub width: f64,
    pub goal_width: f64,
    pub line_width: f64,
    pub center_circle_radius: f64,
    pub goal_area_depth: f64,
    pub goal_area_width: f64,
    /// carpet beyond the outer lines
    pub border: f64,
    pub post_radius: f64,
    pub post_height: f64,
    pub ball_radius: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            length: 9.0,
            width: 6.0,
            goal_width: 2.6,
            line_width: 0.05,
            center_circle_radius: 0.75,
            goal_area_depth: 0.6,
            goal_area_width: 3.45,
            border: 0.7,
            post_radius: 0.05,
            post_height: 0.8,
            ball_radius: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub position: [f64; 2],
    pub kind: CrossingKind,
}

impl FieldSpec {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("length", self.length),
            ("width", self.width),
            ("goal_width", self.goal_width),
            ("line_width", self.line_width),
            ("center_circle_radius", self.center_circle_radius),
            ("goal_area_depth", self.goal_area_depth),
            ("goal_area_width", self.goal_area_width),
            ("post_radius", self.post_radius),
            ("post_height", self.post_height),
            ("ball_radius", self.ball_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("field {name} must be positive"));
            }
        }
        if self.goal_width >= self.width {
            return Err("goal width must be below field width".into());
        }
        if self.goal_area_width >= self.width || self.goal_area_depth >= self.length / 2.0 {
            return Err("goal area does not fit the field".into());
        }
        if self.border < 0.0 {
            return Err("border must be non-negative".into());
        }
        Ok(())
    }

    pub fn half_length(&self) -> f64 {
        self.length / 2.0
    }

    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }

    /// Center of the goal we attack.
    pub fn opponent_goal(&self) -> [f64; 2] {
        [self.half_length(), 0.0]
    }

    /// Centers of the four goal posts; opponent posts first (left, right).
    pub fn goal_posts(&self) -> [[f64; 2]; 4] {
        let (x, y) = (self.half_length(), self.goal_width / 2.0);
        [[x, y], [x, -y], [-x, -y], [-x, y]]
    }

    /// Straight line segments (center lines of the painted stripes).
    pub fn line_segments(&self) -> Vec<([f64; 2], [f64; 2])> {
        let (hl, hw) = (self.half_length(), self.half_width());
        let (gd, gw) = (self.goal_area_depth, self.goal_area_width / 2.0);
        let mut segs = vec![
            ([-hl, hw], [hl, hw]),
            ([-hl, -hw], [hl, -hw]),
            ([-hl, -hw], [-hl, hw]),
            ([hl, -hw], [hl, hw]),
            ([0.0, -hw], [0.0, hw]),
        ];
        for s in [-1.0, 1.0] {
            let x0 = s * hl;
            let x1 = s * (hl - gd);
            segs.push(([x1, -gw], [x1, gw]));
            segs.push(([x0, gw], [x1, gw]));
            segs.push(([x0, -gw], [x1, -gw]));
        }
        segs
    }

    /// Typed line crossings; the set is invariant under a half turn.
    pub fn crossings(&self) -> Vec<Crossing> {
        let (hl, hw) = (self.half_length(), self.half_width());
        let (gd, gw) = (self.goal_area_depth, self.goal_area_width / 2.0);
        let r = self.center_circle_radius;
        let mut out = Vec::new();
        let mut push = |x: f64, y: f64, kind| out.push(Crossing { position: [x, y], kind });
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                push(sx * hl, sy * hw, CrossingKind::L);
                push(sx * (hl - gd), sy * gw, CrossingKind::L);
                push(sx * hl, sy * gw, CrossingKind::T);
            }
        }
        push(0.0, hw, CrossingKind::T);
        push(0.0, -hw, CrossingKind::T);
        push(0.0, r, CrossingKind::X);
        push(0.0, -r, CrossingKind::X);
        out
    }

    /// Whether a ground point lies on a painted line.
    pub fn is_line(&self, p: [f64; 2]) -> bool {
        let half = self.line_width / 2.0;
        let circle = (p[0].hypot(p[1]) - self.center_circle_radius).abs();
        if circle <= half {
            return true;
        }
        self.line_segments()
            .iter()
            .any(|&(a, b)| segment_distance(p, a, b) <= half)
    }

    /// Whether a point is on the carpet (inside the outer border).
    pub fn on_carpet(&self, p: [f64; 2]) -> bool {
        p[0].abs() <= self.half_length() + self.border && p[1].abs() <= self.half_width() + self.border
    }
}

pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}
