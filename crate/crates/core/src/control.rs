//! The fixed-rate control loop, the hardware-interface plugin boundary, a
//! simulated servo plant, compliant command synthesis and effort fading.

use crate::config::{ConfigServer, ParamHandle};
use crate::estimation::attitude::{static_accel, AttitudeFilter, AttitudeParams, GRAVITY};
use crate::geometry::wrap_angle;
use crate::messages::{FadeState, GaitCommand, Gaze, ImuReading, JointStateMsg, Message, MotionStatus, WorldTruth};
use crate::model::RobotModel;
use crate::motion::{create_module, Blackboard, MotionContext, MotionError, MotionLibrary, MotionModule};
use crate::msgbus::{Bus, BusError, Publisher, Subscription};
use crate::topics;
use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Nominal control period (125 Hz).
pub const DEFAULT_PERIOD_NS: u64 = 8_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HardwareError {
    #[error("hardware interface `{0}` is not available in this build")]
    Unavailable(String),
    #[error("unknown hardware interface `{0}`")]
    Unknown(String),
    #[error("hardware fault: {0}")]
    Fault(String),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
}

#[derive(Debug, Error)]
pub enum ControlError {
    #[error(transparent)]
    Hardware(#[from] HardwareError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("non-finite feed-forward torque on joint {0}")]
    NonFiniteTorque(usize),
    #[error("stiffness must be positive")]
    Stiffness,
}

/// Per-joint command sent to the servos.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HardwareCommand {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub tau_ff: Vec<f64>,
    /// 0 = free-wheeling, 1 = full stiffness
    pub effort: Vec<f64>,
}

impl HardwareCommand {
    pub fn hold(q: &[f64], effort: f64) -> Self {
        let n = q.len();
        Self {
            q: q.to_vec(),
            qdot: vec![0.0; n],
            tau_ff: vec![0.0; n],
            effort: vec![effort; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HardwareFeedback {
    pub stamp: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    /// °C per joint
    pub temperature: Vec<f64>,
    pub imu: ImuReading,
}

/// Plugin boundary between the control loop and a servo/sensor plant.
pub trait HardwareInterface: Send {
    fn name(&self) -> &str;
    fn read(&mut self, stamp: f64) -> Result<HardwareFeedback, HardwareError>;
    fn write(&mut self, command: &HardwareCommand) -> Result<(), HardwareError>;
    /// Simulator ground truth for plants that synthesize inertial sensors.
    fn set_environment(&mut self, _truth: &WorldTruth) {}
}

/// Names accepted by [`create_interface`].
pub const INTERFACES: [&str; 2] = ["dummy", "external"];

/// Instantiates a hardware interface by registry name.
pub fn create_interface(
    name: &str,
    model: &RobotModel,
    cfg: DummyConfig,
) -> Result<Box<dyn HardwareInterface>, HardwareError> {
    match name {
        "dummy" => Ok(Box::new(DummyInterface::new(model, cfg))),
        // the physical servo bus is a declared plugin slot without a driver
        "external" => Err(HardwareError::Unavailable(name.to_string())),
        other => Err(HardwareError::Unknown(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DummyConfig {
    pub delay_cycles: usize,
    /// rad
    pub position_noise: f64,
    /// m/s²
    pub accel_noise: f64,
    /// rad/s
    pub gyro_noise: f64,
    /// rad
    pub compass_noise: f64,
    /// servo tracking bandwidth λ, 1/s
    pub bandwidth: f64,
    /// rad/s
    pub velocity_limit: f64,
    pub seed: u64,
    /// s, must match the control period
    pub dt: f64,
    /// servo spring constant used with an external load, N·m/rad
    pub stiffness: f64,
}

impl Default for DummyConfig {
    fn default() -> Self {
        Self {
            delay_cycles: 1,
            position_noise: 0.0005,
            accel_noise: 0.05,
            gyro_noise: 0.005,
            compass_noise: 0.02,
            bandwidth: 30.0,
            velocity_limit: 6.0,
            seed: 1,
            dt: DEFAULT_PERIOD_NS as f64 * 1e-9,
            stiffness: 25.0,
        }
    }
}

/// Joint torques exerted by the environment on the servos as a function of q.
pub type LoadFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Simulated servos: a delay line feeding a velocity-limited first-order lag.
pub struct DummyInterface {
    cfg: DummyConfig,
    q: Vec<f64>,
    qdot: Vec<f64>,
    delay: VecDeque<HardwareCommand>,
    applied: HardwareCommand,
    rng: ChaCha8Rng,
    orientation: UnitQuaternion<f64>,
    rate: [f64; 3],
    load: Option<LoadFn>,
    time: f64,
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map(|d| d.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

impl DummyInterface {
    pub fn new(model: &RobotModel, cfg: DummyConfig) -> Self {
        Self::with_initial(&vec![0.0; model.dof()], cfg)
    }

    pub fn with_initial(q: &[f64], cfg: DummyConfig) -> Self {
        Self {
            cfg,
            q: q.to_vec(),
            qdot: vec![0.0; q.len()],
            delay: VecDeque::new(),
            // no command yet: joints are free-wheeling
            applied: HardwareCommand::hold(q, 0.0),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            orientation: UnitQuaternion::identity(),
            rate: [0.0; 3],
            load: None,
            time: 0.0,
        }
    }

    /// Attaches an environment torque (e.g. gravity on a limb).
    pub fn set_load(&mut self, load: LoadFn) {
        self.load = Some(load);
    }

    pub fn true_positions(&self) -> &[f64] {
        &self.q
    }

    fn integrate(&mut self) {
        let dt = self.cfg.dt;
        let load = self.load.as_ref().map(|f| f(&self.q));
        for j in 0..self.q.len() {
            let cmd = &self.applied;
            let mut err = cmd.q[j] - self.q[j];
            if let Some(l) = &load {
                err -= l[j] / self.cfg.stiffness;
            }
            // λ·dt is capped at 1 so a very stiff servo reaches its target in
            // one step instead of overshooting
            let gain = (self.cfg.bandwidth * cmd.effort[j]).min(1.0 / dt);
            let v = (gain * err).clamp(-self.cfg.velocity_limit, self.cfg.velocity_limit);
            self.qdot[j] = v;
            self.q[j] += v * dt;
        }
    }
}

impl HardwareInterface for DummyInterface {
    fn name(&self) -> &str {
        "dummy"
    }

    fn read(&mut self, stamp: f64) -> Result<HardwareFeedback, HardwareError> {
        self.time = stamp;
        let sigma = self.cfg.position_noise;
        let q = (0..self.q.len())
            .map(|j| self.q[j] + gauss(&mut self.rng, sigma))
            .collect();
        let mut accel = static_accel(self.orientation);
        for a in &mut accel {
            *a += gauss(&mut self.rng, self.cfg.accel_noise);
        }
        let mut gyro = self.rate;
        for g in &mut gyro {
            *g += gauss(&mut self.rng, self.cfg.gyro_noise);
        }
        let (_, _, yaw) = self.orientation.euler_angles();
        let heading = wrap_angle(yaw + gauss(&mut self.rng, self.cfg.compass_noise));
        let mean_effort = self.applied.effort.iter().sum::<f64>() / self.applied.effort.len().max(1) as f64;
        Ok(HardwareFeedback {
            stamp,
            q,
            qdot: self.qdot.clone(),
            temperature: vec![38.0 + 6.0 * mean_effort; self.q.len()],
            imu: ImuReading {
                accel,
                gyro,
                compass: [heading.cos(), heading.sin()],
                battery: (12.6 - stamp * 2e-4).max(10.5),
                max_temp: 38.0 + 6.0 * mean_effort,
                buttons: [false; 3],
            },
        })
    }

    fn write(&mut self, command: &HardwareCommand) -> Result<(), HardwareError> {
        let n = self.q.len();
        if command.q.len() != n || command.effort.len() != n {
            return Err(HardwareError::InvalidCommand(format!("expected {n} joints")));
        }
        if command.q.iter().chain(&command.effort).any(|v| !v.is_finite()) {
            return Err(HardwareError::InvalidCommand("non-finite command".into()));
        }
        let mut c = command.clone();
        c.effort.iter_mut().for_each(|e| *e = e.clamp(0.0, 1.0));
        self.delay.push_back(c);
        if self.delay.len() > self.cfg.delay_cycles {
            self.applied = self.delay.pop_front().unwrap();
        }
        self.integrate();
        Ok(())
    }

    fn set_environment(&mut self, truth: &WorldTruth) {
        let [r, p, y] = truth.trunk_rpy;
        self.orientation = UnitQuaternion::from_euler_angles(r, p, truth.robot.theta + y);
        self.rate = truth.trunk_rate;
    }
}

/// Realizes a feed-forward torque as a position offset against a servo of
/// stiffness `k`: commanded position = `q_des + tau_ff / k`.
pub fn compliant_command(
    q_des: &[f64],
    qdot_des: &[f64],
    tau_ff: &[f64],
    k: f64,
    effort: &[f64],
) -> Result<HardwareCommand, ControlError> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(ControlError::Stiffness);
    }
    if let Some(j) = tau_ff.iter().position(|t| !t.is_finite()) {
        return Err(ControlError::NonFiniteTorque(j));
    }
    Ok(HardwareCommand {
        q: q_des.iter().zip(tau_ff).map(|(q, t)| q + t / k).collect(),
        qdot: qdot_des.to_vec(),
        tau_ff: tau_ff.to_vec(),
        effort: effort.iter().map(|e| e.clamp(0.0, 1.0)).collect(),
    })
}

/// Linear effort ramps shared by all joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadeController {
    from: f64,
    to: f64,
    start: f64,
    duration: f64,
}

impl FadeController {
    pub fn new(effort: f64) -> Self {
        let e = effort.clamp(0.0, 1.0);
        Self {
            from: e,
            to: e,
            start: 0.0,
            duration: 0.0,
        }
    }

    pub fn effort(&self, now: f64) -> f64 {
        if self.duration <= 0.0 || now >= self.start + self.duration {
            return self.to;
        }
        let s = ((now - self.start) / self.duration).clamp(0.0, 1.0);
        self.from + (self.to - self.from) * s
    }

    /// Starts a ramp from the current effort toward `target`.
    pub fn fade(&mut self, target: f64, duration: f64, now: f64) {
        self.from = self.effort(now);
        self.to = target.clamp(0.0, 1.0);
        self.start = now;
        self.duration = duration.max(0.0);
    }

    pub fn state(&self, now: f64) -> FadeState {
        let e = self.effort(now);
        if self.duration > 0.0 && now < self.start + self.duration && self.from != self.to {
            FadeState::Fading
        } else if e == 0.0 {
            FadeState::Relaxed
        } else {
            FadeState::Active
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    /// simulation time advances exactly one period per cycle
    Lockstep,
    /// cycles are paced by the monotonic clock
    WallClock,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleReport {
    pub cycle: u64,
    pub stamp: f64,
    pub faulted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimingStats {
    pub cycles: u64,
    pub mean_period_ms: f64,
    pub p99_jitter_ms: f64,
    pub max_jitter_ms: f64,
    pub overruns: u64,
}

struct Publishers {
    joint_states: Publisher,
    commands: Publisher,
    imu: Publisher,
    attitude: Publisher,
    status: Publisher,
    odometry: Publisher,
}

struct Subscriptions {
    gait: Subscription,
    gaze: Subscription,
    motion: Subscription,
    fade: Subscription,
    truth: Subscription,
}

/// One robot's control loop.
pub struct RobotControl {
    model: RobotModel,
    hw: Box<dyn HardwareInterface>,
    modules: Vec<Box<dyn MotionModule>>,
    bb: Blackboard,
    fade: FadeController,
    attitude: AttitudeFilter,
    period_ns: u64,
    time_ns: u64,
    cycle: u64,
    faulted: Option<String>,
    stiffness: ParamHandle,
    gravity_comp: ParamHandle,
    bus: Bus,
    pubs: Publishers,
    subs: Subscriptions,
    inbox: Arc<Mutex<Vec<Message>>>,
    services: Vec<&'static str>,
    gait_command: GaitCommand,
    gaze: Gaze,
    last_feedback: HardwareFeedback,
}

impl RobotControl {
    pub fn new(
        model: RobotModel,
        hw: Box<dyn HardwareInterface>,
        module_names: &[String],
        library: &MotionLibrary,
        config: &ConfigServer,
        bus: &Bus,
    ) -> Result<Self, ControlError> {
        let mut modules = Vec::new();
        for name in module_names {
            modules.push(create_module(name, &model, config, library)?);
        }
        let startup_fade = config.float("/control/startup_fade", 1.0, 0.0, 10.0)?;
        let stiffness = config.float("/control/stiffness", 25.0, 1.0, 200.0)?;
        let gravity_comp = config.declare("/control/gravity_compensation", true, None)?;
        let stand = stand_pose(&model);
        let mut fade = FadeController::new(0.0);
        fade.fade(1.0, startup_fade.f64(), 0.0);
        let pubs = Publishers {
            joint_states: bus.advertise(topics::JOINT_STATES, "joint_state")?,
            commands: bus.advertise(topics::JOINT_COMMANDS, "joint_state")?,
            imu: bus.advertise(topics::IMU, "imu")?,
            attitude: bus.advertise(topics::ATTITUDE, "attitude")?,
            status: bus.advertise(topics::MOTION_STATUS, "motion_status")?,
            odometry: bus.advertise(topics::ODOMETRY, "odometry")?,
        };
        let subs = Subscriptions {
            gait: bus.subscribe(topics::GAIT_COMMAND, "gait_command", 4)?,
            gaze: bus.subscribe(topics::GAZE, "gaze", 4)?,
            motion: bus.subscribe(topics::MOTION_PLAY, "motion_request", 8)?,
            fade: bus.subscribe(topics::FADE, "fade", 4)?,
            truth: bus.subscribe(topics::SIM_TRUTH, "world_truth", 4)?,
        };
        Ok(Self {
            bb: Blackboard::new(&stand),
            model,
            hw,
            modules,
            fade,
            attitude: AttitudeFilter::new(AttitudeParams::default()),
            period_ns: DEFAULT_PERIOD_NS,
            time_ns: 0,
            cycle: 0,
            faulted: None,
            stiffness,
            gravity_comp,
            bus: bus.clone(),
            pubs,
            subs,
            inbox: Arc::new(Mutex::new(Vec::new())),
            services: Vec::new(),
            gait_command: GaitCommand::default(),
            gaze: Gaze::default(),
            last_feedback: HardwareFeedback::default(),
        })
    }

    /// Adds a module after the configured ones (used for instrumentation).
    pub fn push_module(&mut self, module: Box<dyn MotionModule>) {
        self.modules.push(module);
    }

    pub fn set_period_ns(&mut self, period_ns: u64) {
        self.period_ns = period_ns.max(1);
    }

    pub fn period(&self) -> f64 {
        self.period_ns as f64 * 1e-9
    }

    /// Simulation time of the next cycle, seconds.
    pub fn time(&self) -> f64 {
        self.time_ns as f64 * 1e-9
    }

    pub fn cycles(&self) -> u64 {
        self.cycle
    }

    pub fn fault(&self) -> Option<&str> {
        self.faulted.as_deref()
    }

    pub fn blackboard(&self) -> &Blackboard {
        &self.bb
    }

    pub fn last_feedback(&self) -> &HardwareFeedback {
        &self.last_feedback
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    /// Clears a fault; the robot fades back in.
    pub fn reset(&mut self) {
        if self.faulted.take().is_some() {
            let now = self.time();
            self.fade = FadeController::new(0.0);
            self.fade.fade(1.0, 1.0, now);
        }
    }

    /// Registers fade/reset/motion services that forward into the loop.
    pub fn register_services(&mut self) -> Result<(), BusError> {
        let forward = |inbox: Arc<Mutex<Vec<Message>>>, expect: &'static str| {
            move |req: Message| {
                if req.schema() != expect {
                    return Message::ack(false, format!("expected {expect} request"));
                }
                inbox.lock().unwrap().push(req);
                Message::ack(true, "queued")
            }
        };
        self.bus
            .register_service(topics::SRV_FADE, forward(self.inbox.clone(), "fade"))?;
        self.services.push(topics::SRV_FADE);
        self.bus
            .register_service(topics::SRV_RESET, forward(self.inbox.clone(), "empty"))?;
        self.services.push(topics::SRV_RESET);
        self.bus
            .register_service(topics::SRV_MOTION_PLAY, forward(self.inbox.clone(), "motion_request"))?;
        self.services.push(topics::SRV_MOTION_PLAY);
        Ok(())
    }

    fn enter_fault(&mut self, reason: String) {
        if self.faulted.is_none() {
            log::error!(
                "control loop fault at cycle {}: {reason}; relaxing all joints",
                self.cycle
            );
        }
        self.faulted = Some(reason);
    }

    fn drain_inputs(&mut self, now: f64) {
        if let Some(m) = self.subs.truth.latest() {
            if let Message::WorldTruth(t) = m.payload {
                self.hw.set_environment(&t);
            }
        }
        if let Some(m) = self.subs.gait.latest() {
            if let Message::GaitCommand(c) = m.payload {
                self.gait_command = c;
            }
        }
        if let Some(m) = self.subs.gaze.latest() {
            if let Message::Gaze(g) = m.payload {
                self.gaze = g;
            }
        }
        let mut requests: Vec<Message> = self.subs.motion.drain().into_iter().map(|m| m.payload).collect();
        requests.extend(self.subs.fade.drain().into_iter().map(|m| m.payload));
        requests.append(&mut self.inbox.lock().unwrap());
        for req in requests {
            match req {
                Message::MotionRequest { name } => self.bb.requests.push(name),
                Message::Fade { target, duration } => self.fade.fade(target, duration, now),
                Message::Empty => self.reset(),
                _ => {}
            }
        }
    }

    /// Runs one control cycle at the current simulation time.
    pub fn cycle(&mut self) -> CycleReport {
        let stamp = self.time();
        self.cycle_at(stamp)
    }

    fn cycle_at(&mut self, stamp: f64) -> CycleReport {
        self.drain_inputs(stamp);
        let dt = self.period();
        let feedback = match self.hw.read(stamp) {
            Ok(f) => f,
            Err(e) => {
                self.enter_fault(e.to_string());
                let mut f = self.last_feedback.clone();
                f.stamp = stamp;
                f
            }
        };
        let _ = self.pubs.joint_states.publish(
            stamp,
            Message::JointState(JointStateMsg {
                q: feedback.q.clone(),
                qdot: feedback.qdot.clone(),
                tau: Vec::new(),
                effort: Vec::new(),
            }),
        );
        let _ = self.pubs.imu.publish(stamp, Message::Imu(feedback.imu));
        let imu = feedback.imu;
        let attitude = self.attitude.update(imu.gyro, imu.accel, Some(imu.compass), dt);
        let _ = self.pubs.attitude.publish(stamp, Message::Attitude(attitude));

        self.bb.begin_cycle();
        if self.faulted.is_none() {
            let ctx = MotionContext {
                time: stamp,
                dt,
                cycle: self.cycle,
                model: &self.model,
                feedback: &feedback,
                attitude,
                gait_command: self.gait_command,
                gaze: self.gaze,
            };
            for m in &mut self.modules {
                if let Err(e) = m.step(&ctx, &mut self.bb) {
                    self.faulted = Some(format!("{}: {e}", m.name()));
                    log::error!("motion module {} faulted at cycle {}: {e}", m.name(), self.cycle);
                    break;
                }
            }
            for e in &self.bb.errors {
                log::warn!("{e}");
            }
        }

        let command = self.compose(attitude.roll, attitude.pitch, stamp);
        if let Err(e) = self.hw.write(&command) {
            self.enter_fault(e.to_string());
            let _ = self.hw.write(&HardwareCommand::hold(&feedback.q, 0.0));
        }
        let _ = self.pubs.commands.publish(
            stamp,
            Message::JointState(JointStateMsg {
                q: command.q.clone(),
                qdot: command.qdot.clone(),
                tau: command.tau_ff.clone(),
                effort: command.effort.clone(),
            }),
        );
        let status = MotionStatus {
            fade: if self.faulted.is_some() {
                FadeState::Relaxed
            } else {
                self.fade.state(stamp)
            },
            effort: command.effort.iter().cloned().fold(0.0, f64::max),
            fall: self.bb.fall_state,
            playing: self.bb.playing.clone(),
            progress: self.bb.progress,
            walking: self.bb.walking,
        };
        let _ = self.pubs.status.publish(stamp, Message::MotionStatus(status));
        let _ = self.pubs.odometry.publish(stamp, Message::Odometry(self.bb.odometry));
        self.last_feedback = feedback;
        let report = CycleReport {
            cycle: self.cycle,
            stamp,
            faulted: self.faulted.is_some(),
        };
        self.cycle += 1;
        self.time_ns += self.period_ns;
        report
    }

    fn compose(&self, roll: f64, pitch: f64, now: f64) -> HardwareCommand {
        let n = self.model.dof();
        let fade = self.fade.effort(now);
        let relax = self.bb.relax || self.faulted.is_some();
        let effort: Vec<f64> = (0..n)
            .map(|j| if relax { 0.0 } else { fade * self.bb.effort[j] })
            .collect();
        let tau = if self.gravity_comp.bool() && !relax {
            let g = UnitQuaternion::from_euler_angles(roll, pitch, 0.0)
                .inverse_transform_vector(&Vector3::new(0.0, 0.0, -GRAVITY));
            let zero = vec![0.0; n];
            self.model
                .inverse_dynamics(&self.bb.q_des, &self.bb.qdot_des, &zero, g)
                .unwrap_or(zero)
        } else {
            vec![0.0; n]
        };
        compliant_command(&self.bb.q_des, &self.bb.qdot_des, &tau, self.stiffness.f64(), &effort)
            .unwrap_or_else(|_| HardwareCommand::hold(&self.bb.q_des, 0.0))
    }

    /// Runs `cycles` lockstep cycles.
    pub fn run_lockstep(&mut self, cycles: u64) {
        for _ in 0..cycles {
            self.cycle();
        }
    }

    /// Paces cycles with absolute deadlines on the monotonic clock until
    /// `duration` elapses or `stop` is set.
    pub fn run_wall_clock(&mut self, duration: Duration, stop: &AtomicBool) -> TimingStats {
        let period = Duration::from_nanos(self.period_ns);
        let start = Instant::now();
        let base = self.time();
        let mut starts = Vec::new();
        let mut overruns = 0;
        let mut k: u32 = 0;
        while start.elapsed() < duration && !stop.load(Ordering::Relaxed) {
            let deadline = start + period * k;
            sleep_until(deadline);
            let began = Instant::now();
            starts.push((began - start).as_secs_f64() - (period * k).as_secs_f64());
            self.time_ns = ((base + (began - start).as_secs_f64()) * 1e9) as u64;
            self.cycle();
            let spent = began.elapsed();
            if spent > period {
                overruns += 1;
                log::warn!(
                    "control cycle {} overran: {:.3} ms",
                    self.cycle,
                    spent.as_secs_f64() * 1e3
                );
            }
            k += 1;
            // skip missed deadlines instead of bursting to catch up
            while start + period * k < Instant::now() {
                overruns += 1;
                log::warn!("control cycle deadline {k} missed");
                k += 1;
            }
        }
        timing_stats(&starts, period.as_secs_f64(), overruns)
    }
}

impl Drop for RobotControl {
    fn drop(&mut self) {
        for s in &self.services {
            self.bus.unregister_service(s);
        }
    }
}

fn sleep_until(deadline: Instant) {
    const SPIN: Duration = Duration::from_micros(300);
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let left = deadline - now;
        if left > SPIN {
            std::thread::sleep(left - SPIN);
        } else {
            std::hint::spin_loop();
        }
    }
}

/// Statistics from per-cycle start offsets relative to their deadlines.
fn timing_stats(lateness: &[f64], period: f64, overruns: u64) -> TimingStats {
    let n = lateness.len();
    if n < 2 {
        return TimingStats {
            cycles: n as u64,
            overruns,
            ..TimingStats::default()
        };
    }
    // start times are deadline k·period + lateness; the mean period follows
    // from the first and last start
    let span = (n - 1) as f64 * period + lateness[n - 1] - lateness[0];
    let mut jitter: Vec<f64> = lateness.iter().map(|l| l.abs() * 1e3).collect();
    jitter.sort_by(f64::total_cmp);
    let p99 = jitter[((n as f64 * 0.99).ceil() as usize).min(n) - 1];
    TimingStats {
        cycles: n as u64,
        mean_period_ms: span / (n - 1) as f64 * 1e3,
        p99_jitter_ms: p99,
        max_jitter_ms: *jitter.last().unwrap(),
        overruns,
    }
}

/// Standing posture for the default joint names; other joints stay at 0.
pub fn stand_pose(model: &RobotModel) -> Vec<f64> {
    let mut q = vec![0.0; model.dof()];
    let table = [
        ("l_shoulder_roll", 0.1),
        ("r_shoulder_roll", -0.1),
        ("l_elbow_pitch", -0.4),
        ("r_elbow_pitch", -0.4),
        ("l_hip_pitch", -0.3),
        ("r_hip_pitch", -0.3),
        ("l_knee_pitch", 0.6),
        ("r_knee_pitch", 0.6),
        ("l_ankle_pitch", -0.3),
        ("r_ankle_pitch", -0.3),
    ];
    for (name, v) in table {
        if let Ok(j) = model.joint_index(name) {
            q[j] = v;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compliant_offset() {
        let c = compliant_command(&[0.5], &[0.0], &[0.0], 10.0, &[1.0]).unwrap();
        assert_eq!(c.q, vec![0.5]);
        let c = compliant_command(&[0.0], &[0.0], &[2.0], 10.0, &[1.0]).unwrap();
        assert!((c.q[0] - 0.2).abs() < 1e-15);
        assert!(matches!(
            compliant_command(&[0.0], &[0.0], &[f64::NAN], 10.0, &[1.0]),
            Err(ControlError::NonFiniteTorque(0))
        ));
    }

    #[test]
    fn fade_ramps() {
        let mut f = FadeController::new(0.0);
        f.fade(1.0, 2.0, 0.0);
        assert!((f.effort(1.0) - 0.5).abs() < 1e-15);
        assert_eq!(f.state(1.0), FadeState::Fading);
        assert_eq!(f.state(2.5), FadeState::Active);
        f.fade(0.0, 1.0, 1.5);
        assert!((f.effort(1.5) - 0.75).abs() < 1e-15);
        f.fade(1.0, 0.0, 2.0);
        assert_eq!(f.effort(2.0), 1.0);
    }

    #[test]
    fn external_interface_is_declared_but_unavailable() {
        let m = RobotModel::default_model();
        assert!(matches!(
            create_interface("external", &m, DummyConfig::default()),
            Err(HardwareError::Unavailable(_))
        ));
        assert!(matches!(
            create_interface("servo9000", &m, DummyConfig::default()),
            Err(HardwareError::Unknown(_))
        ));
    }

    #[test]
    fn dummy_tracks_and_holds() {
        let cfg = DummyConfig {
            delay_cycles: 0,
            position_noise: 0.0,
            bandwidth: 1e6,
            ..DummyConfig::default()
        };
        let mut d = DummyInterface::with_initial(&[0.0], cfg);
        let target = HardwareCommand::hold(&[0.02], 1.0);
        for k in 0..10 {
            d.read(k as f64 * 0.008).unwrap();
            d.write(&target).unwrap();
        }
        assert!((d.read(1.0).unwrap().q[0] - 0.02).abs() < 1e-6);
        let relaxed = HardwareCommand::hold(&[1.0], 0.0);
        d.write(&relaxed).unwrap();
        assert!((d.true_positions()[0] - 0.02).abs() < 1e-6);
    }
}
