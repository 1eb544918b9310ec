//! Ray-cast renderer for synthetic camera images of the field scene.

use super::camera::{CameraPose, FisheyeCamera};
use super::lut::ColorClass;
use crate::field::{segment_distance, FieldSpec};
use crate::geometry::Pose2;
use crate::messages::ImageMsg;
use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    /// field coordinates of the base center
    pub position: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

/// Everything the camera can see, in field coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub field: FieldSpec,
    pub robot: Pose2,
    pub ball: Option<[f64; 2]>,
    pub obstacles: Vec<Obstacle>,
    /// draw the four goal posts (no crossbars)
    pub posts: bool,
}

impl Scene {
    pub fn new(field: FieldSpec, robot: Pose2) -> Self {
        Self {
            field,
            robot,
            ball: None,
            obstacles: Vec::new(),
            posts: true,
        }
    }
}

struct Cylinder {
    center: [f64; 2],
    radius: f64,
    height: f64,
    class: ColorClass,
}

/// Precomputed scene geometry for repeated ray queries.
pub struct Tracer<'a> {
    scene: &'a Scene,
    segments: Vec<([f64; 2], [f64; 2])>,
    cylinders: Vec<Cylinder>,
}

impl<'a> Tracer<'a> {
    pub fn new(scene: &'a Scene) -> Self {
        let f = &scene.field;
        let mut cylinders: Vec<Cylinder> = Vec::new();
        if scene.posts {
            for p in f.goal_posts() {
                cylinders.push(Cylinder {
                    center: p,
                    radius: f.post_radius,
                    height: f.post_height,
                    class: ColorClass::Yellow,
                });
            }
        }
        for o in &scene.obstacles {
            cylinders.push(Cylinder {
                center: o.position,
                radius: o.radius,
                height: o.height,
                class: ColorClass::Black,
            });
        }
        Self {
            scene,
            segments: f.line_segments(),
            cylinders,
        }
    }

    fn ground_class(&self, p: [f64; 2]) -> ColorClass {
        let f = &self.scene.field;
        if !f.on_carpet(p) {
            return ColorClass::None;
        }
        let half = f.line_width / 2.0;
        let on_circle = (p[0].hypot(p[1]) - f.center_circle_radius).abs() <= half;
        if on_circle || self.segments.iter().any(|&(a, b)| segment_distance(p, a, b) <= half) {
            ColorClass::White
        } else {
            ColorClass::Green
        }
    }

    /// Class of the first surface hit by a ray given in field coordinates.
    pub fn trace(&self, o: Vector3<f64>, d: Vector3<f64>) -> ColorClass {
        let mut best = f64::INFINITY;
        let mut class = ColorClass::None;
        if d.z < 0.0 {
            let t = -o.z / d.z;
            best = t;
            class = self.ground_class([o.x + t * d.x, o.y + t * d.y]);
        }
        if let Some(b) = self.scene.ball {
            let r = self.scene.field.ball_radius;
            let oc = o - Vector3::new(b[0], b[1], r);
            let (a, bb, c) = (d.dot(&d), oc.dot(&d), oc.dot(&oc) - r * r);
            let disc = bb * bb - a * c;
            if disc >= 0.0 {
                let t = (-bb - disc.sqrt()) / a;
                if t > 0.0 && t < best {
                    best = t;
                    class = ColorClass::Orange;
                }
            }
        }
        for cyl in &self.cylinders {
            let (ox, oy) = (o.x - cyl.center[0], o.y - cyl.center[1]);
            let a = d.x * d.x + d.y * d.y;
            let bb = ox * d.x + oy * d.y;
            let c = ox * ox + oy * oy - cyl.radius * cyl.radius;
            if a > 0.0 {
                let disc = bb * bb - a * c;
                if disc >= 0.0 {
                    let t = (-bb - disc.sqrt()) / a;
                    let z = o.z + t * d.z;
                    if t > 0.0 && t < best && (0.0..=cyl.height).contains(&z) {
                        best = t;
                        class = cyl.class;
                    }
                }
            }
            if d.z < 0.0 && o.z > cyl.height {
                let t = (cyl.height - o.z) / d.z;
                let (x, y) = (ox + t * d.x, oy + t * d.y);
                if t < best && x * x + y * y <= cyl.radius * cyl.radius {
                    best = t;
                    class = cyl.class;
                }
            }
        }
        class
    }
}

/// Renders the scene seen from an egocentric camera pose. Pixels outside the
/// image circle get the background color. `noise` is the per-channel
/// gaussian σ in YUV counts.
pub fn render(scene: &Scene, camera: &FisheyeCamera, pose: &CameraPose, noise: f64, seed: u64) -> ImageMsg {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let yaw = UnitQuaternion::from_euler_angles(0.0, 0.0, scene.robot.theta);
    let rot = yaw * pose.0.rotation;
    let p = pose.position();
    let [ox, oy] = scene.robot.to_world([p.x, p.y]);
    let origin = Vector3::new(ox, oy, p.z);
    let tracer = Tracer::new(scene);
    let mut data = Vec::with_capacity(w * h * 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (noise > 0.0).then(|| Normal::new(0.0, noise).expect("finite noise"));
    for y in 0..h {
        for x in 0..w {
            let class = match camera.ray([x as f64 + 0.5, y as f64 + 0.5]) {
                Ok(r) => tracer.trace(origin, rot * r),
                Err(_) => ColorClass::None,
            };
            let yuv = class.nominal_yuv();
            match &normal {
                Some(n) => {
                    for c in yuv {
                        data.push((c as f64 + n.sample(&mut rng)).round().clamp(0.0, 255.0) as u8);
                    }
                }
                None => data.extend_from_slice(&yuv),
            }
        }
    }
    ImageMsg {
        width: camera.width,
        height: camera.height,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::camera::project_point;
    use crate::perception::lut::ColorLut;

    fn class_at(img: &ImageMsg, lut: &ColorLut, px: [f64; 2]) -> ColorClass {
        let i = (px[1] as usize * img.width as usize + px[0] as usize) * 3;
        lut.classify(img.data[i], img.data[i + 1], img.data[i + 2])
    }

    #[test]
    fn horizon_splits_green_and_background() {
        let cam = FisheyeCamera::default();
        let pose = CameraPose::looking(0.0, 0.0, 0.9, 0.0, 0.4);
        let mut scene = Scene::new(FieldSpec::default(), Pose2::new(-2.0, 1.5, 0.0));
        scene.posts = false;
        let img = render(&scene, &cam, &pose, 0.0, 0);
        let lut = ColorLut::default();
        let ground = project_point(&cam, &pose, &Vector3::new(0.5, 0.3, 0.0)).unwrap();
        assert_eq!(class_at(&img, &lut, ground), ColorClass::Green);
        let sky = project_point(&cam, &pose, &Vector3::new(5.0, 0.0, 3.0)).unwrap();
        assert_eq!(class_at(&img, &lut, sky), ColorClass::None);
    }

    #[test]
    fn ball_center_pixel_is_orange() {
        let cam = FisheyeCamera::default();
        let pose = CameraPose::looking(0.0, 0.0, 0.9, 0.0, 0.5);
        let mut scene = Scene::new(FieldSpec::default(), Pose2::default());
        scene.ball = Some([1.0, 0.0]);
        let img = render(&scene, &cam, &pose, 0.0, 0);
        let px = project_point(&cam, &pose, &Vector3::new(1.0, 0.0, 0.1)).unwrap();
        assert_eq!(class_at(&img, &ColorLut::default(), px), ColorClass::Orange);
    }

    #[test]
    fn center_circle_is_white_on_both_sides() {
        let cam = FisheyeCamera::default();
        let pose = CameraPose::looking(0.0, 0.0, 0.9, 0.0, 0.9);
        let scene = Scene::new(FieldSpec::default(), Pose2::new(-1.2, 0.0, 0.0));
        let img = render(&scene, &cam, &pose, 0.0, 0);
        let lut = ColorLut::default();
        for p in [[0.45, 0.0], [1.2, 0.3], [1.2, -0.5]] {
            let px = project_point(&cam, &pose, &Vector3::new(p[0], p[1], 0.0)).unwrap();
            assert_eq!(class_at(&img, &lut, px), ColorClass::White, "{p:?}");
        }
    }
}
