//! Equidistant fisheye camera and pixel/ray conversions.
//!
//! Camera frame: x along the optical axis, y left, z up. Image u grows to the
//! right (−y) and v grows downward (−z).

use super::VisionError;
use crate::model::RobotModel;
use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use std::f64::consts::FRAC_PI_2;

pub const IMAGE_WIDTH: u32 = 800;
pub const IMAGE_HEIGHT: u32 = 600;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisheyeCamera {
    pub width: u32,
    pub height: u32,
    /// px/rad
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    /// px
    pub circle_radius: f64,
}

impl Default for FisheyeCamera {
    fn default() -> Self {
        Self {
            width: IMAGE_WIDTH,
            height: IMAGE_HEIGHT,
            focal: 300.0 / FRAC_PI_2,
            cx: 400.0,
            cy: 300.0,
            circle_radius: 300.0,
        }
    }
}

impl FisheyeCamera {
    /// Pixel of a direction given in the camera frame, or None behind the lens.
    pub fn project_ray(&self, d: &Vector3<f64>) -> Option<[f64; 2]> {
        let norm = d.norm();
        if !(norm > 0.0) {
            return None;
        }
        let lateral = d.y.hypot(d.z);
        let theta = lateral.atan2(d.x);
        let r = self.focal * theta;
        if r > self.circle_radius + 1e-9 {
            return None;
        }
        if lateral == 0.0 {
            return Some([self.cx, self.cy]);
        }
        Some([self.cx - r * d.y / lateral, self.cy - r * d.z / lateral])
    }

    /// Unit ray in the camera frame through a pixel.
    pub fn ray(&self, pixel: [f64; 2]) -> Result<Vector3<f64>, VisionError> {
        let (du, dv) = (pixel[0] - self.cx, pixel[1] - self.cy);
        let r = du.hypot(dv);
        if r > self.circle_radius + 1e-9 {
            return Err(VisionError::OutsideCircle(pixel));
        }
        if r == 0.0 {
            return Ok(Vector3::x());
        }
        let theta = r / self.focal;
        let s = theta.sin();
        Ok(Vector3::new(theta.cos(), -s * du / r, -s * dv / r))
    }

    pub fn contains(&self, pixel: [f64; 2]) -> bool {
        pixel[0] >= 0.0 && pixel[1] >= 0.0 && pixel[0] < self.width as f64 && pixel[1] < self.height as f64
    }
}

/// Camera placement in the egocentric frame (trunk footprint on the ground,
/// x forward, z up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose(pub Isometry3<f64>);

impl CameraPose {
    /// Camera at `height` above the footprint origin, pitched down by
    /// `tilt` and turned left by `pan`.
    pub fn looking(x: f64, y: f64, height: f64, pan: f64, tilt: f64) -> Self {
        let rot = UnitQuaternion::from_euler_angles(0.0, tilt, pan);
        CameraPose(Isometry3::from_parts(Translation3::new(x, y, height), rot))
    }

    pub fn position(&self) -> Vector3<f64> {
        self.0.translation.vector
    }

    /// Camera pose from joint positions and trunk attitude. The footprint
    /// origin is below the trunk at the height of the lower sole.
    pub fn from_model(model: &RobotModel, q: &[f64], roll: f64, pitch: f64) -> Result<Self, VisionError> {
        let poses = model
            .forward_kinematics(q)
            .map_err(|e| VisionError::Model(e.to_string()))?;
        let level = UnitQuaternion::from_euler_angles(roll, pitch, 0.0);
        let cam = model
            .frame_pose("camera", &poses)
            .map_err(|e| VisionError::Model(e.to_string()))?;
        let mut ground = f64::INFINITY;
        for sole in ["l_sole", "r_sole"] {
            if let Ok(p) = model.frame_pose(sole, &poses) {
                ground = ground.min((level * p.translation.vector).z);
            }
        }
        if !ground.is_finite() {
            return Err(VisionError::Model("model has no sole frames".into()));
        }
        let lift = Translation3::new(0.0, 0.0, -ground);
        Ok(CameraPose(
            lift * Isometry3::from_parts(Translation3::identity(), level) * cam,
        ))
    }
}

/// Pixel at which an egocentric point appears.
pub fn project_point(camera: &FisheyeCamera, pose: &CameraPose, p: &Vector3<f64>) -> Option<[f64; 2]> {
    let local = pose.0.inverse_transform_point(&Point3::from(*p));
    camera.project_ray(&local.coords)
}

/// Egocentric ray through a pixel. With `assume_ground` the ray is scaled to
/// its ground intersection; otherwise the unit direction is returned.
pub fn unproject_pixel(
    camera: &FisheyeCamera,
    pose: &CameraPose,
    pixel: [f64; 2],
    assume_ground: bool,
) -> Result<Vector3<f64>, VisionError> {
    unproject_to_height(camera, pose, pixel, assume_ground.then_some(0.0))
}

/// Like [`unproject_pixel`] but intersects the horizontal plane `z = h`.
pub fn unproject_to_height(
    camera: &FisheyeCamera,
    pose: &CameraPose,
    pixel: [f64; 2],
    plane: Option<f64>,
) -> Result<Vector3<f64>, VisionError> {
    let dir = pose.0.rotation * camera.ray(pixel)?;
    let Some(h) = plane else {
        return Ok(dir);
    };
    let origin = pose.position();
    if dir.z >= -1e-12 || origin.z <= h {
        return Err(VisionError::Horizon(pixel));
    }
    let t = (h - origin.z) / dir.z;
    Ok(origin + dir * t)
}

/// Angle of the egocentric ray through `pixel` below the horizon.
pub fn depression(camera: &FisheyeCamera, pose: &CameraPose, pixel: [f64; 2]) -> Option<f64> {
    let dir = pose.0.rotation * camera.ray(pixel).ok()?;
    Some((-dir.z).asin())
}
