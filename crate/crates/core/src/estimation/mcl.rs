//! Particle-filter localization on the soccer field.
//!
//! Observations are egocentric goal posts and typed line crossings plus a
//! compass heading. Each observation is scored against the nearest map
//! landmark of its type (no explicit data association), so the 180°
//! symmetric field leaves two equally good hypotheses until the compass
//! disambiguates them.

use crate::field::{Crossing, FieldSpec};
use crate::geometry::{wrap_angle, Pose2};
use crate::messages::{CrossingKind, DetectionSet, PoseBelief};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MclParams {
    pub particles: usize,
    /// m, egocentric landmark position noise
    pub sigma_landmark: f64,
    /// rad
    pub sigma_compass: f64,
    pub p_floor: f64,
    /// translational noise per meter traveled
    pub alpha_trans: f64,
    /// rotational noise per radian turned
    pub alpha_rot: f64,
    /// rotational noise per meter traveled
    pub alpha_trans_rot: f64,
    /// per-prediction jitter (m, m, rad) that keeps the cloud diverse when
    /// the robot stands still
    pub jitter: [f64; 3],
    /// resample when the effective sample size falls below this fraction of N
    pub resample_fraction: f64,
    /// after resampling, each coordinate gets noise with σ = roughening ·
    /// (spread of the cloud in that coordinate) · N^(-1/3)
    pub roughening: f64,
    /// fraction of the cloud redrawn each step from poses that explain the
    /// current detections (0 disables)
    pub reset_fraction: f64,
}

impl Default for MclParams {
    fn default() -> Self {
        Self {
            particles: 250,
            sigma_landmark: 0.3,
            sigma_compass: 0.2,
            p_floor: 1e-4,
            alpha_trans: 0.1,
            alpha_rot: 0.1,
            alpha_trans_rot: 0.05,
            jitter: [0.02, 0.02, 0.01],
            resample_fraction: 0.5,
            roughening: 0.5,
            reset_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pose: Pose2,
    pub weight: f64,
}

pub struct Localizer {
    pub params: MclParams,
    field: FieldSpec,
    posts: Vec<[f64; 2]>,
    crossings: Vec<Crossing>,
    particles: Vec<Particle>,
    rng: ChaCha8Rng,
    /// set when the last correction underflowed and the cloud was rescattered
    pub reinitialized: bool,
    reinit_count: u64,
}

impl Localizer {
    pub fn new(params: MclParams, field: FieldSpec, seed: u64) -> Self {
        let mut l = Self {
            params,
            field,
            posts: field.goal_posts().to_vec(),
            crossings: field.crossings(),
            particles: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            reinitialized: false,
            reinit_count: 0,
        };
        l.scatter_uniform();
        l
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn reinit_count(&self) -> u64 {
        self.reinit_count
    }

    /// Replaces the cloud with N particles spread over the field.
    pub fn scatter_uniform(&mut self) {
        let n = self.params.particles.max(1);
        let (hl, hw) = (self.field.half_length(), self.field.half_width());
        let w = 1.0 / n as f64;
        self.particles = (0..n)
            .map(|_| Particle {
                pose: Pose2::new(
                    self.rng.random_range(-hl..=hl),
                    self.rng.random_range(-hw..=hw),
                    self.rng.random_range(-PI..PI),
                ),
                weight: w,
            })
            .collect();
    }

    pub fn set_particles(&mut self, poses: &[Pose2]) {
        let w = 1.0 / poses.len().max(1) as f64;
        self.particles = poses.iter().map(|&pose| Particle { pose, weight: w }).collect();
    }

    /// Moves every particle by a body-frame odometry increment plus noise.
    pub fn predict(&mut self, dx: f64, dy: f64, dtheta: f64) {
        let p = self.params;
        let dist = dx.hypot(dy);
        let sigma_xy = p.alpha_trans * dist;
        let sigma = [
            sigma_xy + p.jitter[0],
            sigma_xy + p.jitter[1],
            p.alpha_rot * dtheta.abs() + p.alpha_trans_rot * dist + p.jitter[2],
        ];
        let normals: Vec<Option<Normal<f64>>> = sigma
            .iter()
            .map(|&s| if s > 0.0 { Normal::new(0.0, s).ok() } else { None })
            .collect();
        for part in &mut self.particles {
            let mut n = [0.0; 3];
            for (k, dist) in normals.iter().enumerate() {
                if let Some(d) = dist {
                    n[k] = d.sample(&mut self.rng);
                }
            }
            part.pose = part.pose.advance(dx + n[0], dy + n[1], dtheta + n[2]);
        }
    }

    fn landmark_factor(&self, pose: &Pose2, obs: [f64; 2], candidates: impl Iterator<Item = [f64; 2]>) -> f64 {
        let inv = 1.0 / (2.0 * self.params.sigma_landmark * self.params.sigma_landmark);
        let best = candidates
            .map(|lm| {
                let pred = pose.to_local(lm);
                let d2 = (pred[0] - obs[0]).powi(2) + (pred[1] - obs[1]).powi(2);
                (-d2 * inv).exp()
            })
            .fold(0.0, f64::max);
        self.params.p_floor + (1.0 - self.params.p_floor) * best
    }

    /// Log-likelihood of the observations for one pose.
    pub fn log_likelihood(&self, pose: &Pose2, detections: &DetectionSet, compass: Option<f64>) -> f64 {
        let mut ll = 0.0;
        for post in &detections.posts {
            ll += self.landmark_factor(pose, *post, self.posts.iter().copied()).ln();
        }
        for c in &detections.crossings {
            let same = self.crossings.iter().filter(|m| m.kind == c.kind).map(|m| m.position);
            ll += self.landmark_factor(pose, c.position, same).ln();
        }
        if let Some(heading) = compass {
            let e = wrap_angle(heading - pose.theta);
            ll -= e * e / (2.0 * self.params.sigma_compass * self.params.sigma_compass);
        }
        ll
    }

    /// Reweights particles by the observation likelihood and normalizes.
    pub fn correct(&mut self, detections: &DetectionSet, compass: Option<f64>) {
        self.reinitialized = false;
        let logs: Vec<f64> = self
            .particles
            .iter()
            .map(|p| p.weight.ln() + self.log_likelihood(&p.pose, detections, compass))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() || max < f64::MIN_POSITIVE.ln() {
            self.reinitialized = true;
            self.reinit_count += 1;
            log::warn!("localization weights underflowed, rescattering particles");
            self.scatter_uniform();
            return;
        }
        let mut sum = 0.0;
        for (p, l) in self.particles.iter_mut().zip(&logs) {
            p.weight = (l - max).exp();
            sum += p.weight;
        }
        for p in &mut self.particles {
            p.weight /= sum;
        }
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
    }

    /// Low-variance resampling when the ESS is low; returns whether it ran.
    pub fn maybe_resample(&mut self) -> bool {
        let n = self.particles.len();
        if self.effective_sample_size() >= self.params.resample_fraction * n as f64 {
            return false;
        }
        self.particles = systematic_resample(&self.particles, self.rng.random::<f64>());
        self.roughen();
        true
    }

    /// Spreads duplicated particles in proportion to the cloud's extent so a
    /// broad cloud keeps searching while a converged one stays tight.
    fn roughen(&mut self) {
        let k = self.params.roughening;
        if !(k > 0.0) || self.particles.len() < 2 {
            return;
        }
        let mean_theta = belief_of(&self.particles).pose.theta;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.particles {
            let v = [p.pose.x, p.pose.y, wrap_angle(p.pose.theta - mean_theta)];
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let scale = k * (self.particles.len() as f64).powf(-1.0 / 3.0);
        let noise: Vec<Option<Normal<f64>>> = (0..3)
            .map(|d| {
                let sigma = scale * (hi[d] - lo[d]);
                (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
            })
            .collect();
        for p in &mut self.particles {
            let mut d = [0.0; 3];
            for (k, n) in noise.iter().enumerate() {
                if let Some(n) = n {
                    d[k] = n.sample(&mut self.rng);
                }
            }
            p.pose = Pose2::new(p.pose.x + d[0], p.pose.y + d[1], wrap_angle(p.pose.theta + d[2]));
        }
    }

    pub fn belief(&self) -> PoseBelief {
        belief_of(&self.particles)
    }

    /// Poses that place observed landmarks exactly on map landmarks of the
    /// same type. With a compass every single observation gives one pose per
    /// candidate landmark; without it, pairs of observations are aligned with
    /// map pairs of matching separation. The field symmetry means the latter
    /// always come in half-turn pairs.
    pub fn observation_poses(&self, detections: &DetectionSet, compass: Option<f64>) -> Vec<Pose2> {
        let obs: Vec<(Option<CrossingKind>, [f64; 2])> = detections
            .posts
            .iter()
            .map(|&p| (None, p))
            .chain(detections.crossings.iter().map(|c| (Some(c.kind), c.position)))
            .collect();
        let map: Vec<(Option<CrossingKind>, [f64; 2])> = self
            .posts
            .iter()
            .map(|&p| (None, p))
            .chain(self.crossings.iter().map(|c| (Some(c.kind), c.position)))
            .collect();
        let mut out = Vec::new();
        let mut keep = |pose: Pose2| {
            if self.field.on_carpet([pose.x, pose.y]) {
                out.push(pose);
            }
        };
        if let Some(h) = compass {
            for &(kind, o) in &obs {
                for &(mk, m) in &map {
                    if mk == kind {
                        let rotated = Pose2::new(0.0, 0.0, h).to_world(o);
                        keep(Pose2::new(m[0] - rotated[0], m[1] - rotated[1], wrap_angle(h)));
                    }
                }
            }
            return out;
        }
        let tol = 2.0 * self.params.sigma_landmark;
        let head = &obs[..obs.len().min(4)];
        for (i, &(ki, oi)) in head.iter().enumerate() {
            for &(kj, oj) in &head[i + 1..] {
                let d_obs = (oj[0] - oi[0]).hypot(oj[1] - oi[1]);
                if d_obs < 0.5 {
                    continue;
                }
                let a_obs = (oj[1] - oi[1]).atan2(oj[0] - oi[0]);
                for &(ka, a) in &map {
                    if ka != ki {
                        continue;
                    }
                    for &(kb, b) in &map {
                        if kb != kj || a == b {
                            continue;
                        }
                        let d_map = (b[0] - a[0]).hypot(b[1] - a[1]);
                        if (d_map - d_obs).abs() > tol {
                            continue;
                        }
                        let theta = (b[1] - a[1]).atan2(b[0] - a[0]) - a_obs;
                        let rotated = Pose2::new(0.0, 0.0, theta).to_world(oi);
                        keep(Pose2::new(a[0] - rotated[0], a[1] - rotated[1], wrap_angle(theta)));
                    }
                }
            }
        }
        out
    }

    /// Replaces a random `reset_fraction` of the particles with (slightly
    /// perturbed) observation poses. Runs before the correction so the new
    /// particles are weighted like the rest.
    fn inject(&mut self, detections: &DetectionSet, compass: Option<f64>) {
        let f = self.params.reset_fraction;
        let n = self.particles.len();
        let k = (f * n as f64).round() as usize;
        if k == 0 {
            return;
        }
        let candidates = self.observation_poses(detections, compass);
        if candidates.is_empty() {
            return;
        }
        let spread = Normal::new(0.0, 0.5 * self.params.sigma_landmark).expect("finite sigma");
        let turn = Normal::new(0.0, 0.5 * self.params.sigma_compass).expect("finite sigma");
        let w = self.particles.iter().map(|p| p.weight).sum::<f64>() / n as f64;
        for _ in 0..k {
            let c = candidates[self.rng.random_range(0..candidates.len())];
            let pose = Pose2::new(
                c.x + spread.sample(&mut self.rng),
                c.y + spread.sample(&mut self.rng),
                wrap_angle(c.theta + turn.sample(&mut self.rng)),
            );
            let i = self.rng.random_range(0..n);
            self.particles[i] = Particle { pose, weight: w };
        }
    }

    /// predict → inject → correct → resample → estimate.
    pub fn step(&mut self, odom: (f64, f64, f64), detections: &DetectionSet, compass: Option<f64>) -> PoseBelief {
        self.predict(odom.0, odom.1, odom.2);
        self.inject(detections, compass);
        self.correct(detections, compass);
        self.maybe_resample();
        self.belief()
    }
}

/// Systematic resampling with a single uniform offset `u` ∈ [0, 1).
pub fn systematic_resample(particles: &[Particle], u: f64) -> Vec<Particle> {
    let n = particles.len();
    let w = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = particles[0].weight;
    let mut i = 0;
    for k in 0..n {
        let target = (u + k as f64) * w;
        while target > cumulative && i + 1 < n {
            i += 1;
            cumulative += particles[i].weight;
        }
        out.push(Particle {
            pose: particles[i].pose,
            weight: w,
        });
    }
    out
}

/// Weighted mean (circular in θ), covariance and confidence of a cloud.
pub fn belief_of(particles: &[Particle]) -> PoseBelief {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    let (mut mx, mut my, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
    for p in particles {
        let w = p.weight / total;
        mx += w * p.pose.x;
        my += w * p.pose.y;
        s += w * p.pose.theta.sin();
        c += w * p.pose.theta.cos();
    }
    let theta = s.atan2(c);
    let mut cov = [0.0; 9];
    for p in particles {
        let w = p.weight / total;
        let d = [p.pose.x - mx, p.pose.y - my, wrap_angle(p.pose.theta - theta)];
        for r in 0..3 {
            for k in 0..3 {
                cov[3 * r + k] += w * d[r] * d[k];
            }
        }
    }
    PoseBelief {
        pose: Pose2::new(mx, my, theta),
        confidence: 1.0 / (1.0 + cov[0] + cov[4]),
        covariance: cov,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> MclParams {
        MclParams {
            alpha_trans: 0.0,
            alpha_rot: 0.0,
            alpha_trans_rot: 0.0,
            jitter: [0.0; 3],
            roughening: 0.0,
            reset_fraction: 0.0,
            ..MclParams::default()
        }
    }

    #[test]
    fn noiseless_predict_moves_along_heading() {
        let mut l = Localizer::new(quiet(), FieldSpec::default(), 1);
        let before: Vec<Pose2> = l.particles().iter().map(|p| p.pose).collect();
        l.predict(0.0, 0.0, 0.0);
        assert!(l.particles().iter().zip(&before).all(|(p, b)| p.pose == *b));
        l.predict(0.1, 0.0, 0.0);
        for (p, b) in l.particles().iter().zip(&before) {
            assert!((p.pose.x - b.x - 0.1 * b.theta.cos()).abs() < 1e-12);
            assert!((p.pose.y - b.y - 0.1 * b.theta.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn true_pose_scores_higher() {
        let l = Localizer::new(quiet(), FieldSpec::default(), 1);
        let truth = Pose2::new(2.0, 0.5, 0.1);
        let det = DetectionSet {
            posts: l.field().goal_posts()[..2].iter().map(|p| truth.to_local(*p)).collect(),
            ..DetectionSet::default()
        };
        let off = Pose2::new(3.0, 0.5, 0.1);
        assert!(l.log_likelihood(&truth, &det, None) > l.log_likelihood(&off, &det, None));
    }

    #[test]
    fn single_heavy_particle_resamples_to_itself() {
        let mut parts: Vec<Particle> = (0..10)
            .map(|i| Particle {
                pose: Pose2::new(i as f64, 0.0, 0.0),
                weight: 0.0,
            })
            .collect();
        parts[3].weight = 1.0;
        let out = systematic_resample(&parts, 0.37);
        assert!(out.iter().all(|p| p.pose.x == 3.0));
        assert_eq!(belief_of(&out).pose.x, 3.0);
    }

    #[test]
    fn uniform_weights_do_not_resample() {
        let mut l = Localizer::new(MclParams::default(), FieldSpec::default(), 2);
        assert!((l.effective_sample_size() - 250.0).abs() < 1e-9);
        assert!(!l.maybe_resample());
    }

    #[test]
    fn circular_mean() {
        let parts = [
            Particle {
                pose: Pose2::new(0.0, 0.0, 175f64.to_radians()),
                weight: 0.5,
            },
            Particle {
                pose: Pose2::new(0.0, 0.0, -175f64.to_radians()),
                weight: 0.5,
            },
        ];
        assert!((belief_of(&parts).pose.theta.abs() - PI).abs() < 1e-9);
    }
}
