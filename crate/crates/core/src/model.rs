//! Kinematic and dynamic model of a revolute-joint robot tree.
//!
//! Models are read from a small TOML format listing links (mass, center of
//! mass, inertia about the COM), revolute joints (parent, child, fixed
//! origin, axis, limits) and optional named fixed frames such as the camera
//! or the soles. The root link is the one link that is nobody's child; it is
//! treated as a fixed base for inverse dynamics.

use nalgebra::{Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

/// The model shipped with the repository (20 DOF, 6.6 kg, 0.95 m).
pub const DEFAULT_MODEL: &str = include_str!("../data/robot_model.toml");

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid model element `{element}`: {reason}")]
    Validation { element: String, reason: String },
    #[error("expected {expected} joint values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("model io error: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(element: &str, reason: impl Into<String>) -> ModelError {
    ModelError::Validation {
        element: element.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    #[serde(default, rename = "link")]
    links: Vec<LinkFile>,
    #[serde(default, rename = "joint")]
    joints: Vec<JointFile>,
    #[serde(default, rename = "frame")]
    frames: Vec<FrameFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    name: String,
    mass: f64,
    #[serde(default)]
    com: [f64; 3],
    /// ixx, iyy, izz, ixy, ixz, iyz about the COM
    #[serde(default)]
    inertia: [f64; 6],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    name: String,
    parent: String,
    child: String,
    #[serde(default)]
    origin: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
    axis: [f64; 3],
    limits: JointLimits,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameFile {
    name: String,
    link: String,
    #[serde(default)]
    origin: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub lower: f64,
    pub upper: f64,
    /// rad/s
    pub velocity: f64,
    /// rad/s²
    pub acceleration: f64,
    /// N·m
    pub torque: f64,
}

#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Matrix3<f64>,
}

#[derive(Debug, Clone)]
pub struct JointSpec {
    pub name: String,
    pub parent: usize,
    pub child: usize,
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
    pub limits: JointLimits,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub name: String,
    pub link: usize,
    pub origin: Isometry3<f64>,
}

/// Joint-space state; all vectors have one entry per joint.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointStateVector {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub qddot: Vec<f64>,
    pub tau: Vec<f64>,
}

impl JointStateVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            qdot: vec![0.0; n],
            qddot: vec![0.0; n],
            tau: vec![0.0; n],
        }
    }
}

/// Immutable, validated robot model.
#[derive(Debug, Clone)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<JointSpec>,
    pub frames: Vec<Frame>,
    root: usize,
    /// joints sorted so every parent link is posed before its children
    order: Vec<usize>,
    /// joints whose parent is each link
    child_joints: Vec<Vec<usize>>,
}

fn isometry(origin: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(origin[0], origin[1], origin[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl RobotModel {
    pub fn load(file: &Path) -> Result<Self, ModelError> {
        Self::from_str(&std::fs::read_to_string(file)?)
    }

    pub fn default_model() -> Self {
        Self::from_str(DEFAULT_MODEL).expect("bundled model is valid")
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = toml::from_str(text).map_err(|e| ModelError::Parse {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        Self::build(file)
    }

    fn build(file: ModelFile) -> Result<Self, ModelError> {
        let mut link_index = BTreeMap::new();
        let mut links = Vec::with_capacity(file.links.len());
        for l in &file.links {
            if link_index.insert(l.name.clone(), links.len()).is_some() {
                return Err(invalid(&l.name, "duplicated link name"));
            }
            if !(l.mass > 0.0) || !l.mass.is_finite() {
                return Err(invalid(&l.name, "mass must be positive"));
            }
            if !finite(&l.com) || !finite(&l.inertia) || l.inertia[..3].iter().any(|&i| i < 0.0) {
                return Err(invalid(
                    &l.name,
                    "com/inertia must be finite with non-negative diagonal",
                ));
            }
            let [ixx, iyy, izz, ixy, ixz, iyz] = l.inertia;
            links.push(Link {
                name: l.name.clone(),
                mass: l.mass,
                com: Vector3::from(l.com),
                inertia: Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz),
            });
        }
        if links.is_empty() {
            return Err(invalid(&file.name, "model has no links"));
        }
        let lookup = |name: &str, joint: &str| {
            link_index
                .get(name)
                .copied()
                .ok_or_else(|| invalid(joint, format!("unknown link `{name}`")))
        };
        let mut joints = Vec::with_capacity(file.joints.len());
        let mut names = BTreeSet::new();
        let mut parent_of: Vec<Option<usize>> = vec![None; links.len()];
        for j in &file.joints {
            if !names.insert(j.name.clone()) {
                return Err(invalid(&j.name, "duplicated joint name"));
            }
            let parent = lookup(&j.parent, &j.name)?;
            let child = lookup(&j.child, &j.name)?;
            if parent == child {
                return Err(invalid(&j.name, "joint connects a link to itself (cycle)"));
            }
            if parent_of[child].is_some() {
                return Err(invalid(
                    &j.name,
                    format!("link `{}` has two parent joints (cycle)", j.child),
                ));
            }
            let axis = Vector3::from(j.axis);
            if !finite(&j.axis) || (axis.norm() - 1.0).abs() > 1e-9 {
                return Err(invalid(&j.name, "axis must have unit norm"));
            }
            let lim = j.limits;
            if !(lim.lower < lim.upper) {
                return Err(invalid(&j.name, "lower position limit must be below upper"));
            }
            if !(lim.velocity > 0.0 && lim.acceleration > 0.0 && lim.torque > 0.0) {
                return Err(invalid(&j.name, "velocity/acceleration/torque limits must be positive"));
            }
            if !finite(&j.origin) || !finite(&j.rpy) {
                return Err(invalid(&j.name, "origin must be finite"));
            }
            parent_of[child] = Some(joints.len());
            joints.push(JointSpec {
                name: j.name.clone(),
                parent,
                child,
                origin: isometry(j.origin, j.rpy),
                axis: Unit::new_unchecked(axis),
                limits: lim,
            });
        }
        let roots: Vec<usize> = (0..links.len()).filter(|&l| parent_of[l].is_none()).collect();
        if roots.len() != 1 {
            let name = roots
                .get(1)
                .map(|&l| links[l].name.clone())
                .unwrap_or_else(|| file.name.clone());
            return Err(invalid(
                &name,
                "link is disconnected from the tree (expected exactly one root)",
            ));
        }
        let root = roots[0];
        let mut child_joints = vec![Vec::new(); links.len()];
        for (i, j) in joints.iter().enumerate() {
            child_joints[j.parent].push(i);
        }
        let mut order = Vec::with_capacity(joints.len());
        let mut stack = vec![root];
        let mut seen = vec![false; links.len()];
        while let Some(l) = stack.pop() {
            seen[l] = true;
            for &j in child_joints[l].iter().rev() {
                order.push(j);
                stack.push(joints[j].child);
            }
        }
        if let Some(l) = seen.iter().position(|s| !s) {
            return Err(invalid(&links[l].name, "link is part of a cycle or disconnected"));
        }
        let mut frames = Vec::new();
        for f in &file.frames {
            let link = link_index
                .get(&f.link)
                .copied()
                .ok_or_else(|| invalid(&f.name, format!("unknown link `{}`", f.link)))?;
            frames.push(Frame {
                name: f.name.clone(),
                link,
                origin: isometry(f.origin, f.rpy),
            });
        }
        Ok(Self {
            name: file.name,
            links,
            joints,
            frames,
            root,
            order,
            child_joints,
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Joint indices in parent-before-child order.
    pub fn traversal_order(&self) -> &[usize] {
        &self.order
    }

    pub fn parent_joint(&self, link: usize) -> Option<usize> {
        self.joints.iter().position(|j| j.child == link)
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn joint_index(&self, name: &str) -> Result<usize, ModelError> {
        self.joints
            .iter()
            .position(|j| j.name == name)
            .ok_or_else(|| ModelError::Unknown {
                kind: "joint",
                name: name.to_string(),
            })
    }

    pub fn link_index(&self, name: &str) -> Result<usize, ModelError> {
        self.links
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| ModelError::Unknown {
                kind: "link",
                name: name.to_string(),
            })
    }

    pub fn joint_names(&self) -> Vec<String> {
        self.joints.iter().map(|j| j.name.clone()).collect()
    }

    fn check_len(&self, v: &[f64]) -> Result<(), ModelError> {
        if v.len() == self.dof() {
            Ok(())
        } else {
            Err(ModelError::Dimension {
                expected: self.dof(),
                got: v.len(),
            })
        }
    }

    /// Joints whose value lies outside its position limits.
    pub fn limit_violations(&self, q: &[f64]) -> Vec<usize> {
        self.joints
            .iter()
            .zip(q)
            .enumerate()
            .filter(|(_, (j, &v))| v < j.limits.lower || v > j.limits.upper)
            .map(|(i, _)| i)
            .collect()
    }

    /// Pose of every link in the root frame, indexed like `links`.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Vec<Isometry3<f64>>, ModelError> {
        self.check_len(q)?;
        let violations = self.limit_violations(q);
        if !violations.is_empty() {
            log::debug!("forward kinematics outside joint limits: {violations:?}");
        }
        let mut poses = vec![Isometry3::identity(); self.links.len()];
        for &j in &self.order {
            let joint = &self.joints[j];
            let rot = UnitQuaternion::from_axis_angle(&joint.axis, q[j]);
            poses[joint.child] = poses[joint.parent] * joint.origin * rot;
        }
        Ok(poses)
    }

    /// Pose of a named fixed frame given link poses from `forward_kinematics`.
    pub fn frame_pose(&self, name: &str, poses: &[Isometry3<f64>]) -> Result<Isometry3<f64>, ModelError> {
        let f = self
            .frames
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| ModelError::Unknown {
                kind: "frame",
                name: name.to_string(),
            })?;
        Ok(poses[f.link] * f.origin)
    }

    /// Mass-weighted mean of link COM positions in the root frame.
    pub fn center_of_mass(&self, q: &[f64]) -> Result<Vector3<f64>, ModelError> {
        let poses = self.forward_kinematics(q)?;
        let mut acc = Vector3::zeros();
        for (link, pose) in self.links.iter().zip(&poses) {
            acc += link.mass * (pose * nalgebra::Point3::from(link.com)).coords;
        }
        Ok(acc / self.total_mass())
    }

    /// Recursive Newton–Euler inverse dynamics with the root fixed.
    ///
    /// `gravity` is expressed in the root frame (e.g. `(0, 0, -9.81)` when the
    /// root is upright). Returns the joint torques that realize `qddot`.
    pub fn inverse_dynamics(
        &self,
        q: &[f64],
        qdot: &[f64],
        qddot: &[f64],
        gravity: Vector3<f64>,
    ) -> Result<Vec<f64>, ModelError> {
        self.check_len(q)?;
        self.check_len(qdot)?;
        self.check_len(qddot)?;
        let poses = self.forward_kinematics(q)?;
        let n = self.links.len();
        let mut omega = vec![Vector3::zeros(); n];
        let mut alpha = vec![Vector3::zeros(); n];
        // linear acceleration of each link frame origin; the base accelerates
        // against gravity so gravity loads come out of the same recursion
        let mut accel = vec![Vector3::zeros(); n];
        accel[self.root] = -gravity;
        let mut axes = vec![Vector3::zeros(); self.dof()];

        for &j in &self.order {
            let joint = &self.joints[j];
            let (p, c) = (joint.parent, joint.child);
            let z = poses[c].rotation * joint.axis.into_inner();
            axes[j] = z;
            let spin = z * qdot[j];
            let r = poses[c].translation.vector - poses[p].translation.vector;
            omega[c] = omega[p] + spin;
            alpha[c] = alpha[p] + z * qddot[j] + omega[p].cross(&spin);
            accel[c] = accel[p] + alpha[p].cross(&r) + omega[p].cross(&omega[p].cross(&r));
        }

        let mut force = vec![Vector3::zeros(); n];
        let mut moment = vec![Vector3::zeros(); n];
        let mut tau = vec![0.0; self.dof()];
        for &j in self.order.iter().rev() {
            let c = self.joints[j].child;
            let link = &self.links[c];
            let rot = poses[c].rotation.to_rotation_matrix();
            let r_com = rot * link.com;
            let a_com = accel[c] + alpha[c].cross(&r_com) + omega[c].cross(&omega[c].cross(&r_com));
            let inertia = rot.matrix() * link.inertia * rot.matrix().transpose();
            let f = link.mass * a_com;
            let n_com = inertia * alpha[c] + omega[c].cross(&(inertia * omega[c]));
            let mut f_total = f;
            let mut n_total = n_com + r_com.cross(&f);
            for &k in &self.child_joints[c] {
                let gc = self.joints[k].child;
                let offset = poses[gc].translation.vector - poses[c].translation.vector;
                f_total += force[gc];
                n_total += moment[gc] + offset.cross(&force[gc]);
            }
            force[c] = f_total;
            moment[c] = n_total;
            tau[j] = axes[j].dot(&n_total);
        }
        Ok(tau)
    }

    /// Torques holding `q` static under `gravity`.
    pub fn gravity_torques(&self, q: &[f64], gravity: Vector3<f64>) -> Result<Vec<f64>, ModelError> {
        let z = vec![0.0; self.dof()];
        self.inverse_dynamics(q, &z, &z, gravity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    const PENDULUM: &str = r#"
name = "pendulum"
[[link]]
name = "base"
mass = 1.0
[[link]]
name = "bob"
mass = 1.0
com = [0.0, 0.0, -0.5]
[[joint]]
name = "swing"
parent = "base"
child = "bob"
axis = [0.0, 1.0, 0.0]
limits = { lower = -3.2, upper = 3.2, velocity = 10.0, acceleration = 50.0, torque = 20.0 }
"#;

    fn g() -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -9.81)
    }

    #[test]
    fn default_model_aggregates() {
        let m = RobotModel::default_model();
        assert_eq!(m.dof(), 20);
        assert!((m.total_mass() - 6.6).abs() <= 0.066);
        let count = |prefix: &str| m.joints.iter().filter(|j| j.name.starts_with(prefix)).count();
        assert_eq!(count("neck_"), 2);
        assert_eq!(count("l_shoulder") + count("l_elbow"), 3);
        assert_eq!(count("r_shoulder") + count("r_elbow"), 3);
        assert_eq!(count("l_hip") + count("l_knee") + count("l_ankle"), 6);
        assert_eq!(count("r_hip") + count("r_knee") + count("r_ankle"), 6);
        let poses = m.forward_kinematics(&vec![0.0; 20]).unwrap();
        let top = m.frame_pose("head_top", &poses).unwrap().translation.z;
        let sole = m.frame_pose("l_sole", &poses).unwrap().translation.z;
        assert!((top - sole - 0.95).abs() < 1e-9);
    }

    #[test]
    fn pendulum_loads_and_validates() {
        let m = RobotModel::from_str(PENDULUM).unwrap();
        assert_eq!(m.dof(), 1);
        let dup = PENDULUM.replace("name = \"bob\"", "name = \"base\"");
        assert!(matches!(RobotModel::from_str(&dup), Err(ModelError::Validation { .. })));
        let dup_joint = format!(
            "{PENDULUM}\n[[link]]\nname = \"x\"\nmass = 1.0\n[[joint]]\nname = \"swing\"\nparent = \"bob\"\nchild = \"x\"\naxis = [1.0, 0.0, 0.0]\nlimits = {{ lower = -1.0, upper = 1.0, velocity = 1.0, acceleration = 1.0, torque = 1.0 }}\n"
        );
        match RobotModel::from_str(&dup_joint) {
            Err(ModelError::Validation { element, .. }) => assert_eq!(element, "swing"),
            other => panic!("{other:?}"),
        }
        let bad_axis = PENDULUM.replace("[0.0, 1.0, 0.0]", "[0.0, 1.1, 0.0]");
        assert!(matches!(
            RobotModel::from_str(&bad_axis),
            Err(ModelError::Validation { .. })
        ));
        let bad_mass = PENDULUM.replace("mass = 1.0\ncom", "mass = 0.0\ncom");
        assert!(matches!(
            RobotModel::from_str(&bad_mass),
            Err(ModelError::Validation { .. })
        ));
        let orphan = format!("{PENDULUM}\n[[link]]\nname = \"lost\"\nmass = 1.0\n");
        match RobotModel::from_str(&orphan) {
            Err(ModelError::Validation { element, .. }) => assert_eq!(element, "lost"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            RobotModel::from_str("name = 3"),
            Err(ModelError::Parse { .. })
        ));
    }

    #[test]
    fn cycle_is_rejected() {
        let text = r#"
name = "loop"
[[link]]
name = "a"
mass = 1.0
[[link]]
name = "b"
mass = 1.0
[[link]]
name = "c"
mass = 1.0
[[joint]]
name = "ab"
parent = "a"
child = "b"
axis = [0.0, 0.0, 1.0]
limits = { lower = -1.0, upper = 1.0, velocity = 1.0, acceleration = 1.0, torque = 1.0 }
[[joint]]
name = "cb"
parent = "c"
child = "b"
axis = [0.0, 0.0, 1.0]
limits = { lower = -1.0, upper = 1.0, velocity = 1.0, acceleration = 1.0, torque = 1.0 }
"#;
        assert!(matches!(RobotModel::from_str(text), Err(ModelError::Validation { .. })));
    }

    #[test]
    fn pendulum_gravity_torque() {
        let m = RobotModel::from_str(PENDULUM).unwrap();
        let hanging = m.gravity_torques(&[0.0], g()).unwrap();
        assert!(hanging[0].abs() < 1e-12);
        let horizontal = m.gravity_torques(&[FRAC_PI_2], g()).unwrap();
        assert!((horizontal[0] - 4.905).abs() < 1e-12, "{}", horizontal[0]);
    }

    #[test]
    fn dimension_errors() {
        let m = RobotModel::from_str(PENDULUM).unwrap();
        assert!(matches!(
            m.forward_kinematics(&[0.0, 0.0]),
            Err(ModelError::Dimension { .. })
        ));
        assert!(matches!(
            m.inverse_dynamics(&[0.0], &[], &[0.0], g()),
            Err(ModelError::Dimension { .. })
        ));
    }

    #[test]
    fn center_of_mass_simple_cases() {
        let m = RobotModel::from_str(PENDULUM).unwrap();
        // base COM at origin, bob COM at (0,0,-0.5): equal masses → midpoint
        let com = m.center_of_mass(&[0.0]).unwrap();
        assert!((com - Vector3::new(0.0, 0.0, -0.25)).norm() < 1e-12);
        let single =
            RobotModel::from_str("name = \"one\"\n[[link]]\nname = \"l\"\nmass = 2.0\ncom = [0.1, 0.2, 0.3]\n")
                .unwrap();
        assert!((single.center_of_mass(&[]).unwrap() - Vector3::new(0.1, 0.2, 0.3)).norm() < 1e-15);
    }
}
