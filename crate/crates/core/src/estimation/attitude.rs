//! Complementary attitude filter.
//!
//! Orientation is integrated from bias-corrected gyro rates as a
//! quaternion (so it survives lying on the floor), pulled toward the
//! accelerometer's gravity direction with gain `k_acc` whenever the specific
//! force magnitude is close to g, and pulled toward the compass heading about
//! the world vertical. The persistent accelerometer correction is integrated
//! slowly into a gyro bias estimate.

use crate::geometry::wrap_angle;
use crate::messages::AttitudeEstimate;
use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttitudeParams {
    /// 1/s
    pub k_acc: f64,
    /// 1/s², integral gain for the bias estimate
    pub k_bias: f64,
    /// 1/s
    pub k_compass: f64,
    /// accelerometer used only when | |a| - g | < gate * g
    pub gate: f64,
}

impl Default for AttitudeParams {
    fn default() -> Self {
        Self {
            k_acc: 2.0,
            k_bias: 0.02,
            k_compass: 1.0,
            gate: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttitudeFilter {
    pub params: AttitudeParams,
    orientation: UnitQuaternion<f64>,
    bias: Vector3<f64>,
}

impl AttitudeFilter {
    pub fn new(params: AttitudeParams) -> Self {
        Self {
            params,
            orientation: UnitQuaternion::identity(),
            bias: Vector3::zeros(),
        }
    }

    pub fn with_attitude(params: AttitudeParams, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            params,
            orientation: UnitQuaternion::from_euler_angles(roll, pitch, yaw),
            bias: Vector3::zeros(),
        }
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        self.orientation
    }

    /// One filter step. `compass` is the world heading as (cos, sin).
    pub fn update(&mut self, gyro: [f64; 3], accel: [f64; 3], compass: Option<[f64; 2]>, dt: f64) -> AttitudeEstimate {
        let p = self.params;
        let mut omega = Vector3::from(gyro) - self.bias;
        let a = Vector3::from(accel);
        let norm = a.norm();
        if norm > 0.0 && (norm - GRAVITY).abs() < p.gate * GRAVITY {
            let measured_up = a / norm;
            let estimated_up = self.orientation.inverse_transform_vector(&Vector3::z());
            let err = measured_up.cross(&estimated_up);
            omega += p.k_acc * err;
            self.bias -= p.k_bias * err * dt;
        }
        self.orientation *= UnitQuaternion::from_scaled_axis(omega * dt);
        if let Some([c, s]) = compass {
            if c.is_finite() && s.is_finite() && (c != 0.0 || s != 0.0) {
                let (_, _, yaw) = self.orientation.euler_angles();
                let err = wrap_angle(s.atan2(c) - yaw);
                self.orientation =
                    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), p.k_compass * err * dt) * self.orientation;
            }
        }
        self.orientation.renormalize();
        self.estimate()
    }

    pub fn estimate(&self) -> AttitudeEstimate {
        let (roll, pitch, yaw) = self.orientation.euler_angles();
        AttitudeEstimate {
            roll,
            pitch,
            yaw,
            gyro_bias: self.bias.into(),
        }
    }

    /// Angle between estimated and true vertical, rad.
    pub fn tilt_error(&self, truth: UnitQuaternion<f64>) -> f64 {
        let est = self.orientation.inverse_transform_vector(&Vector3::z());
        let tru = truth.inverse_transform_vector(&Vector3::z());
        est.angle(&tru)
    }
}

/// Specific force an ideal accelerometer reads at rest in the given attitude.
pub fn static_accel(orientation: UnitQuaternion<f64>) -> [f64; 3] {
    (orientation.inverse_transform_vector(&Vector3::z()) * GRAVITY).into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_fixed_point() {
        let mut f = AttitudeFilter::new(AttitudeParams::default());
        for _ in 0..100 {
            let e = f.update([0.0; 3], [0.0, 0.0, GRAVITY], None, 0.008);
            assert_eq!((e.roll, e.pitch), (0.0, 0.0));
        }
    }

    #[test]
    fn tilt_converges() {
        let mut f = AttitudeFilter::with_attitude(AttitudeParams::default(), 20f64.to_radians(), 0.0, 0.0);
        for _ in 0..375 {
            f.update([0.0; 3], [0.0, 0.0, GRAVITY], None, 0.008);
        }
        assert!(f.tilt_error(UnitQuaternion::identity()).to_degrees() < 0.5);
    }

    #[test]
    fn large_acceleration_is_gated() {
        let mut f = AttitudeFilter::with_attitude(AttitudeParams::default(), 0.3, 0.0, 0.0);
        f.update([0.0; 3], [0.0, 0.0, 2.0 * GRAVITY], None, 0.008);
        assert!((f.estimate().roll - 0.3).abs() < 1e-12);
    }

    #[test]
    fn compass_pulls_yaw() {
        let mut f = AttitudeFilter::new(AttitudeParams::default());
        let target: f64 = 1.0;
        for _ in 0..2000 {
            f.update([0.0; 3], [0.0, 0.0, GRAVITY], Some([target.cos(), target.sin()]), 0.008);
        }
        assert!((f.estimate().yaw - target).abs() < 1e-3);
    }
}
