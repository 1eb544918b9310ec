//! Camera model, color segmentation, object detection and the synthetic
//! renderer used to exercise them.

pub mod camera;
pub mod detect;
pub mod downscale;
pub mod lut;
pub mod render;
pub mod segment;

pub use camera::{project_point, unproject_pixel, CameraPose, FisheyeCamera};
pub use detect::{detect_objects, DetectorParams};
pub use downscale::{downscale, Downscaler};
pub use lut::{ColorClass, ColorLut};
pub use render::{render, Obstacle, Scene};
pub use segment::{segment, Segmentation};

use crate::messages::{DetectionSet, ImageMsg};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("image dimension error: {0}")]
    Dimension(String),
    #[error("pixel {0:?} lies outside the image circle")]
    OutsideCircle([f64; 2]),
    #[error("ray through pixel {0:?} does not meet the ground")]
    Horizon([f64; 2]),
    #[error("downscale factor {0} is not one of 2, 4, 8")]
    Factor(u32),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("model error: {0}")]
    Model(String),
}

/// Segmentation plus detection with fixed camera intrinsics.
#[derive(Debug, Clone)]
pub struct VisionPipeline {
    pub camera: FisheyeCamera,
    pub lut: ColorLut,
    pub params: DetectorParams,
}

impl Default for VisionPipeline {
    fn default() -> Self {
        Self {
            camera: FisheyeCamera::default(),
            lut: ColorLut::default(),
            params: DetectorParams::default(),
        }
    }
}

impl VisionPipeline {
    pub fn process(&self, image: &ImageMsg, pose: &CameraPose) -> Result<DetectionSet, VisionError> {
        let seg = segment(image, &self.lut, Some((self.camera.width, self.camera.height)))?;
        Ok(detect_objects(&seg, &self.camera, pose, &self.params))
    }
}
