//! Keyframe motions, their on-disk format and planned playback.

use super::spline::{plan_segment, Boundary, SegmentPlan};
use super::MotionError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    /// seconds from motion start
    pub t: f64,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    /// optional per-joint effort held until the next keyframe that sets one
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effort: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeMotion {
    pub name: String,
    pub joints: Vec<String>,
    pub v_max: Vec<f64>,
    pub a_max: Vec<f64>,
    #[serde(rename = "keyframe")]
    pub keyframes: Vec<Keyframe>,
}

impl KeyframeMotion {
    pub fn load(path: &Path) -> Result<Self, MotionError> {
        let text = std::fs::read_to_string(path).map_err(|e| MotionError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, MotionError> {
        let m: KeyframeMotion = toml::from_str(text).map_err(|e| MotionError::Parse(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("motions serialize")
    }

    pub fn save(&self, path: &Path) -> Result<(), MotionError> {
        std::fs::write(path, self.to_text()).map_err(|e| MotionError::Io(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        let n = self.joints.len();
        if n == 0 || self.keyframes.is_empty() {
            return Err(MotionError::Invalid(format!(
                "motion `{}` needs joints and keyframes",
                self.name
            )));
        }
        if self.v_max.len() != n || self.a_max.len() != n {
            return Err(MotionError::Invalid("limit lists must match the joint list".into()));
        }
        if self
            .v_max
            .iter()
            .chain(&self.a_max)
            .any(|&l| !(l > 0.0 && l.is_finite()))
        {
            return Err(MotionError::Invalid("limits must be positive".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for (k, kf) in self.keyframes.iter().enumerate() {
            if !(kf.t >= 0.0) || !kf.t.is_finite() {
                return Err(MotionError::Ordering(format!("keyframe {k} has negative time")));
            }
            if kf.t <= prev {
                return Err(MotionError::Ordering(format!(
                    "keyframe {k} time {} does not increase",
                    kf.t
                )));
            }
            prev = kf.t;
            if kf.position.len() != n || kf.velocity.len() != n {
                return Err(MotionError::Invalid(format!(
                    "keyframe {k} does not cover the joint list"
                )));
            }
            if kf.position.iter().chain(&kf.velocity).any(|v| !v.is_finite()) {
                return Err(MotionError::Invalid(format!("keyframe {k} has non-finite values")));
            }
            for (j, v) in kf.velocity.iter().enumerate() {
                if v.abs() > self.v_max[j] {
                    return Err(MotionError::Invalid(format!(
                        "keyframe {k} velocity of `{}` exceeds its limit",
                        self.joints[j]
                    )));
                }
            }
            if let Some(e) = &kf.effort {
                if e.len() != n || e.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    return Err(MotionError::Invalid(format!(
                        "keyframe {k} effort must list values in [0,1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Uniformly stretches time by `factor` (velocities shrink accordingly).
    pub fn retimed(&self, factor: f64) -> Result<Self, MotionError> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(MotionError::Invalid("retime factor must be positive".into()));
        }
        let mut m = self.clone();
        for kf in &mut m.keyframes {
            kf.t *= factor;
            for v in &mut kf.velocity {
                *v /= factor;
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn plan(&self) -> Result<PlannedMotion, MotionError> {
        PlannedMotion::new(self.clone())
    }
}

/// A motion with every segment solved and time-scaled where needed.
#[derive(Debug, Clone)]
pub struct PlannedMotion {
    pub motion: KeyframeMotion,
    /// playback time at which each keyframe is reached
    pub times: Vec<f64>,
    pub segments: Vec<SegmentPlan>,
    efforts: Vec<Vec<f64>>,
}

/// Joint values returned by [`PlannedMotion::sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSample {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub effort: Vec<f64>,
}

impl PlannedMotion {
    pub fn new(motion: KeyframeMotion) -> Result<Self, MotionError> {
        motion.validate()?;
        let n = motion.joints.len();
        let kfs = &motion.keyframes;
        let mut times = vec![kfs[0].t];
        let mut segments = Vec::with_capacity(kfs.len().saturating_sub(1));
        for w in kfs.windows(2) {
            let bounds = |k: &Keyframe| -> Vec<Boundary> {
                (0..n)
                    .map(|j| Boundary {
                        q: k.position[j],
                        v: k.velocity[j],
                    })
                    .collect()
            };
            let plan = plan_segment(
                &bounds(&w[0]),
                &bounds(&w[1]),
                w[1].t - w[0].t,
                &motion.v_max,
                &motion.a_max,
            )?;
            if plan.was_scaled() {
                log::info!(
                    "motion `{}`: segment ending at t={} stretched by {:.4}",
                    motion.name,
                    w[1].t,
                    plan.scale
                );
            }
            times.push(times.last().unwrap() + plan.duration);
            segments.push(plan);
        }
        let mut efforts = Vec::with_capacity(kfs.len());
        let mut current = vec![1.0; n];
        for kf in kfs {
            if let Some(e) = &kf.effort {
                current.clone_from(e);
            }
            efforts.push(current.clone());
        }
        Ok(Self {
            motion,
            times,
            segments,
            efforts,
        })
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn scaled_segments(&self) -> Vec<(usize, f64)> {
        self.segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.was_scaled())
            .map(|(i, s)| (i, s.scale))
            .collect()
    }

    /// Evaluates the planned chain at playback time `t`.
    pub fn sample(&self, t: f64) -> Result<MotionSample, MotionError> {
        let end = self.end_time();
        if !(0.0..=end).contains(&t) {
            return Err(MotionError::Range { t, end });
        }
        let kfs = &self.motion.keyframes;
        if t <= self.times[0] || self.segments.is_empty() {
            return Ok(MotionSample {
                position: kfs[0].position.clone(),
                velocity: if t < self.times[0] {
                    vec![0.0; kfs[0].velocity.len()]
                } else {
                    kfs[0].velocity.clone()
                },
                effort: self.efforts[0].clone(),
            });
        }
        if t >= end {
            let last = kfs.len() - 1;
            return Ok(MotionSample {
                position: kfs[last].position.clone(),
                velocity: kfs[last].velocity.clone(),
                effort: self.efforts[last].clone(),
            });
        }
        // segment i spans times[i]..times[i+1]
        let i = self.times.partition_point(|&k| k <= t) - 1;
        let local = t - self.times[i];
        let seg = &self.segments[i];
        let mut position = Vec::with_capacity(seg.joints.len());
        let mut velocity = Vec::with_capacity(seg.joints.len());
        for j in &seg.joints {
            let (q, v, _) = j.sample(local);
            position.push(q);
            velocity.push(v);
        }
        Ok(MotionSample {
            position,
            velocity,
            effort: self.efforts[i].clone(),
        })
    }

    /// Piecewise-constant acceleration at `t` (for limit checks).
    pub fn acceleration(&self, t: f64) -> Vec<f64> {
        if self.segments.is_empty() || t <= self.times[0] || t >= self.end_time() {
            return vec![0.0; self.motion.joints.len()];
        }
        let i = self.times.partition_point(|&k| k <= t) - 1;
        let local = t - self.times[i];
        self.segments[i].joints.iter().map(|j| j.sample(local).2).collect()
    }
}

/// Named motions available to the motion player.
#[derive(Debug, Clone, Default)]
pub struct MotionLibrary {
    motions: BTreeMap<String, KeyframeMotion>,
}

pub const BUNDLED_MOTIONS: [&str; 4] = [
    include_str!("../../data/motions/kick.toml"),
    include_str!("../../data/motions/getup_prone.toml"),
    include_str!("../../data/motions/getup_supine.toml"),
    include_str!("../../data/motions/stand.toml"),
];

impl MotionLibrary {
    pub fn bundled() -> Self {
        let mut lib = Self::default();
        for text in BUNDLED_MOTIONS {
            lib.insert(KeyframeMotion::parse(text).expect("bundled motions are valid"));
        }
        lib
    }

    /// Loads every `*.toml` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, MotionError> {
        let mut lib = Self::default();
        let entries = std::fs::read_dir(dir).map_err(|e| MotionError::Io(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "toml")) {
            lib.insert(KeyframeMotion::load(&p)?);
        }
        Ok(lib)
    }

    pub fn insert(&mut self, motion: KeyframeMotion) {
        self.motions.insert(motion.name.clone(), motion);
    }

    pub fn remove(&mut self, name: &str) -> Option<KeyframeMotion> {
        self.motions.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&KeyframeMotion> {
        self.motions.get(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.motions.keys().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_frame(t1: f64) -> KeyframeMotion {
        KeyframeMotion {
            name: "m".into(),
            joints: vec!["a".into()],
            v_max: vec![1.0],
            a_max: vec![100.0],
            keyframes: vec![
                Keyframe {
                    t: 0.0,
                    position: vec![0.0],
                    velocity: vec![0.0],
                    effort: None,
                },
                Keyframe {
                    t: t1,
                    position: vec![1.0],
                    velocity: vec![0.0],
                    effort: Some(vec![0.5]),
                },
            ],
        }
    }

    #[test]
    fn bundled_library_parses() {
        let lib = MotionLibrary::bundled();
        for name in ["kick", "getup_prone", "getup_supine", "stand"] {
            let m = lib.get(name).unwrap();
            let plan = m.plan().unwrap();
            assert!(plan.end_time() > 0.0);
        }
    }

    #[test]
    fn sampling_and_range() {
        let plan = two_frame(2.0).plan().unwrap();
        assert_eq!(plan.end_time(), 2.0);
        let s = plan.sample(1.0).unwrap();
        assert!((s.position[0] - 0.5).abs() < 1e-12);
        assert_eq!(s.effort, vec![1.0]);
        let e = plan.sample(2.0).unwrap();
        assert_eq!(e.position, vec![1.0]);
        assert_eq!(e.effort, vec![0.5]);
        assert!(matches!(plan.sample(2.5), Err(MotionError::Range { .. })));
    }

    #[test]
    fn ordering_and_coverage_errors() {
        let mut m = two_frame(1.0);
        m.keyframes[1].t = 0.0;
        assert!(matches!(m.validate(), Err(MotionError::Ordering(_))));
        let mut m = two_frame(1.0);
        m.keyframes[1].position.push(0.0);
        assert!(matches!(m.validate(), Err(MotionError::Invalid(_))));
    }

    #[test]
    fn file_roundtrip_and_retime() {
        let m = two_frame(1.0);
        let back = KeyframeMotion::parse(&m.to_text()).unwrap();
        assert_eq!(m, back);
        let slow = m.retimed(2.0).unwrap();
        assert_eq!(slow.keyframes[1].t, 2.0);
    }
}
