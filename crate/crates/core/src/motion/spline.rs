//! Two-parabola segments between keyframes.
//!
//! Each joint follows an arc with acceleration `a` until the switch time and
//! `-a` afterwards. Boundary positions and velocities are met exactly; the
//! equal-magnitude choice makes the solution unique. When a segment would
//! exceed velocity or acceleration limits its duration is stretched by the
//! smallest factor (up to a bisection tolerance) that restores feasibility.

use super::MotionError;

/// Largest stretch factor attempted before a segment is declared infeasible.
pub const MAX_TIME_SCALE: f64 = 1000.0;

/// One joint's trajectory over a segment of length `duration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSegment {
    pub q0: f64,
    pub v0: f64,
    pub q1: f64,
    pub v1: f64,
    pub duration: f64,
    /// acceleration of the first arc; the second arc uses `-accel`
    pub accel: f64,
    pub switch_time: f64,
}

impl JointSegment {
    pub fn solve(q0: f64, v0: f64, q1: f64, v1: f64, duration: f64) -> Self {
        let (accel, switch_time) = solve_arcs(q1 - q0, v0, v1, duration);
        Self {
            q0,
            v0,
            q1,
            v1,
            duration,
            accel,
            switch_time,
        }
    }

    /// Position, velocity and acceleration at `t` ∈ [0, duration].
    pub fn sample(&self, t: f64) -> (f64, f64, f64) {
        let t = t.clamp(0.0, self.duration);
        let ts = self.switch_time;
        if t <= ts {
            let q = self.q0 + self.v0 * t + 0.5 * self.accel * t * t;
            (q, self.v0 + self.accel * t, self.accel)
        } else {
            // integrate back from the end so the final boundary is exact
            let r = self.duration - t;
            let q = self.q1 - self.v1 * r - 0.5 * self.accel * r * r;
            (q, self.v1 + self.accel * r, -self.accel)
        }
    }

    pub fn peak_velocity(&self) -> f64 {
        let mid = self.v0 + self.accel * self.switch_time;
        self.v0.abs().max(self.v1.abs()).max(mid.abs())
    }

    pub fn within(&self, v_max: f64, a_max: f64) -> bool {
        self.accel.abs() <= a_max && self.peak_velocity() <= v_max
    }
}

/// Equal-magnitude accelerations `(a, t_s)` joining `(0, v0)` to `(dq, v1)` in time `t`.
pub fn solve_arcs(dq: f64, v0: f64, v1: f64, t: f64) -> (f64, f64) {
    let e = dq - 0.5 * (v0 + v1) * t;
    let dv = v1 - v0;
    let sign = if e < 0.0 { -1.0 } else { 1.0 };
    let a = (2.0 * e + sign * (4.0 * e * e + t * t * dv * dv).sqrt()) / (t * t);
    if a == 0.0 {
        return (0.0, 0.5 * t);
    }
    let ts = (0.5 * (t + dv / a)).clamp(0.0, t);
    (a, ts)
}

/// A planned multi-joint segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    pub nominal_duration: f64,
    /// `nominal_duration * scale`
    pub duration: f64,
    pub scale: f64,
    pub joints: Vec<JointSegment>,
}

impl SegmentPlan {
    pub fn was_scaled(&self) -> bool {
        self.scale > 1.0
    }
}

/// Boundary state of one joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    pub q: f64,
    pub v: f64,
}

/// Plans one segment for all joints, stretching the shared duration if needed.
pub fn plan_segment(
    start: &[Boundary],
    end: &[Boundary],
    duration: f64,
    v_max: &[f64],
    a_max: &[f64],
) -> Result<SegmentPlan, MotionError> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(MotionError::Ordering(format!(
            "segment duration must be positive, got {duration}"
        )));
    }
    let n = start.len();
    if end.len() != n || v_max.len() != n || a_max.len() != n {
        return Err(MotionError::Invalid(
            "joint count mismatch between keyframes and limits".into(),
        ));
    }
    for i in 0..n {
        for b in [start[i], end[i]] {
            if b.v.abs() > v_max[i] {
                return Err(MotionError::Invalid(format!(
                    "keyframe velocity {} exceeds limit {} for joint {i}",
                    b.v, v_max[i]
                )));
            }
        }
    }
    let build = |scale: f64| -> Vec<JointSegment> {
        (0..n)
            .map(|i| JointSegment::solve(start[i].q, start[i].v, end[i].q, end[i].v, duration * scale))
            .collect()
    };
    let feasible = |segs: &[JointSegment]| segs.iter().zip(v_max).zip(a_max).all(|((s, &v), &a)| s.within(v, a));

    let joints = build(1.0);
    if feasible(&joints) {
        return Ok(SegmentPlan {
            nominal_duration: duration,
            duration,
            scale: 1.0,
            joints,
        });
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    while !feasible(&build(hi)) {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_TIME_SCALE {
            if feasible(&build(MAX_TIME_SCALE)) {
                hi = MAX_TIME_SCALE;
                break;
            }
            return Err(MotionError::Infeasible(format!(
                "segment of {duration} s cannot meet limits even when stretched {MAX_TIME_SCALE}x"
            )));
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(&build(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SegmentPlan {
        nominal_duration: duration,
        duration: duration * hi,
        scale: hi,
        joints: build(hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(q: f64, v: f64) -> Boundary {
        Boundary { q, v }
    }

    #[test]
    fn rest_to_rest_identity() {
        let s = JointSegment::solve(0.3, 0.0, 0.3, 0.0, 1.0);
        assert_eq!(s.accel, 0.0);
        assert_eq!(s.sample(0.5), (0.3, 0.0, 0.0));
    }

    #[test]
    fn symmetric_bang_bang() {
        let s = JointSegment::solve(0.0, 0.0, 1.0, 0.0, 2.0);
        assert!((s.accel - 1.0).abs() < 1e-12);
        assert!((s.switch_time - 1.0).abs() < 1e-12);
        assert!((s.sample(1.0).0 - 0.5).abs() < 1e-12);
        assert!((s.peak_velocity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn time_scaling_hits_velocity_limit() {
        let plan = plan_segment(&[b(0.0, 0.0)], &[b(1.0, 0.0)], 0.5, &[1.0], &[100.0]).unwrap();
        assert!(plan.was_scaled());
        assert!((plan.duration - 2.0).abs() < 1e-9, "{}", plan.duration);
        assert!(plan.joints[0].peak_velocity() <= 1.0);
    }

    #[test]
    fn rejects_bad_duration_and_velocity() {
        assert!(matches!(
            plan_segment(&[b(0.0, 0.0)], &[b(1.0, 0.0)], 0.0, &[1.0], &[1.0]),
            Err(MotionError::Ordering(_))
        ));
        assert!(matches!(
            plan_segment(&[b(0.0, 2.0)], &[b(1.0, 0.0)], 1.0, &[1.0], &[1.0]),
            Err(MotionError::Invalid(_))
        ));
    }

    #[test]
    fn boundaries_exact_for_general_case() {
        let s = JointSegment::solve(-0.4, 0.7, 0.9, -0.2, 0.8);
        let (q0, v0, _) = s.sample(0.0);
        let (q1, v1, _) = s.sample(0.8);
        assert!((q0 + 0.4).abs() < 1e-12 && (v0 - 0.7).abs() < 1e-12);
        assert!((q1 - 0.9).abs() < 1e-12 && (v1 + 0.2).abs() < 1e-12);
        let (qa, va, _) = s.sample(s.switch_time - 1e-12);
        let (qb, vb, _) = s.sample(s.switch_time + 1e-12);
        assert!((qa - qb).abs() < 1e-9 && (va - vb).abs() < 1e-9);
    }
}
