//! The nodes a launch can start. Each wraps one subsystem and talks to the
//! others only through the bus.

use super::spec::{LaunchError, LaunchSpec};
use crate::behavior::BehaviorNode;
use crate::config::ConfigServer;
use crate::control::{create_interface, RobotControl, TimingStats};
use crate::estimation::{Localizer, MclParams};
use crate::geometry::{wrap_angle, Pose2};
use crate::messages::{DetectionSet, FallState, ImageMsg, Message, MotionStatus};
use crate::model::RobotModel;
use crate::motion::MotionLibrary;
use crate::msgbus::{Bus, Publisher, Subscription, TopicMessage};
use crate::perception::{render, CameraPose, Downscaler, VisionPipeline};
use crate::telemetry::{BagRecorder, Gateway, GatewayContext, PlotStore, TopicHistory};
use crate::topics;
use crate::world::observe::scene_of;
use crate::world::{geometric_observations, ObservationMode, RefereeEvent, Scenario, ScenarioEvent, StepInput, World};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Outcome bookkeeping shared by the nodes of one launch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub time: f64,
    pub score: [u32; 2],
    pub first_goal: Option<f64>,
    pub falls: u32,
    pub recoveries: u32,
    /// recoveries after which the robot walked again
    pub resumed: u32,
    pub fault: Option<String>,
    pub timing: Option<TimingStats>,
}

/// Everything a node may need at construction.
pub struct NodeContext {
    pub bus: Bus,
    pub config: ConfigServer,
    pub model: RobotModel,
    pub library: MotionLibrary,
    pub scenario: Scenario,
    pub spec: LaunchSpec,
    pub seed: u64,
    /// control period, s
    pub period: f64,
    pub report: Arc<Mutex<RunReport>>,
}

pub trait Node: Send {
    fn name(&self) -> &'static str;

    /// Time between steps in wall-clock mode, s.
    fn period(&self) -> Option<f64> {
        None
    }

    fn step(&mut self, now: f64) -> Result<(), String>;

    /// Runs paced by the monotonic clock until `stop` is set.
    fn run_wall_clock(&mut self, start: Instant, default_period: f64, stop: &AtomicBool) -> Result<(), String> {
        let period = Duration::from_secs_f64(self.period().unwrap_or(default_period));
        let mut k: u32 = 0;
        while !stop.load(Ordering::Relaxed) {
            let deadline = start + period * k;
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            }
            self.step(start.elapsed().as_secs_f64())?;
            k += 1;
            while start + period * k < Instant::now() {
                k += 1;
            }
        }
        Ok(())
    }

    fn shutdown(&mut self) {}
}

fn init_err(node: &str) -> impl Fn(String) -> LaunchError + '_ {
    move |reason| LaunchError::Init {
        node: node.to_string(),
        reason,
    }
}

pub struct ControlNode {
    control: RobotControl,
    report: Arc<Mutex<RunReport>>,
}

impl ControlNode {
    pub fn new(ctx: &NodeContext) -> Result<Self, LaunchError> {
        let e = init_err("robot_control");
        let mut hw_cfg = ctx.scenario.hardware;
        hw_cfg.seed = ctx.seed;
        hw_cfg.dt = ctx.period;
        let hw = create_interface(&ctx.spec.hardware, &ctx.model, hw_cfg).map_err(|x| e(x.to_string()))?;
        let mut control = RobotControl::new(
            ctx.model.clone(),
            hw,
            &ctx.spec.modules,
            &ctx.library,
            &ctx.config,
            &ctx.bus,
        )
        .map_err(|x| e(x.to_string()))?;
        control.set_period_ns((ctx.period * 1e9).round() as u64);
        control.register_services().map_err(|x| e(x.to_string()))?;
        Ok(Self {
            control,
            report: ctx.report.clone(),
        })
    }

    fn note_fault(&self) {
        if let Some(f) = self.control.fault() {
            let mut r = self.report.lock().unwrap();
            if r.fault.is_none() {
                r.fault = Some(f.to_string());
            }
        }
    }
}

impl Node for ControlNode {
    fn name(&self) -> &'static str {
        "robot_control"
    }

    fn step(&mut self, _now: f64) -> Result<(), String> {
        self.control.cycle();
        self.note_fault();
        Ok(())
    }

    fn run_wall_clock(&mut self, _start: Instant, _period: f64, stop: &AtomicBool) -> Result<(), String> {
        let stats = self.control.run_wall_clock(Duration::MAX, stop);
        self.note_fault();
        self.report.lock().unwrap().timing = Some(stats);
        Ok(())
    }
}

pub struct SimNode {
    world: World,
    scenario: Scenario,
    next_event: usize,
    rng: ChaCha8Rng,
    period: f64,
    last_now: Option<f64>,
    obs_next: f64,
    game_next: f64,
    kick_fraction: f64,
    neck_yaw: Option<usize>,
    model: RobotModel,
    status: MotionStatus,
    odom: Option<Pose2>,
    q: Vec<f64>,
    awaiting_resume: bool,
    image_seed: u64,
    inbox: Arc<Mutex<Vec<String>>>,
    bus: Bus,
    odometry: Subscription,
    motion: Subscription,
    joints: Subscription,
    truth: Publisher,
    game: Publisher,
    detections: Option<Publisher>,
    image: Option<Publisher>,
    report: Arc<Mutex<RunReport>>,
}

/// Image sensor noise of rendered frames, YUV counts.
const IMAGE_NOISE: f64 = 2.0;

impl SimNode {
    pub fn new(ctx: &NodeContext) -> Result<Self, LaunchError> {
        let e = init_err("world_sim");
        let s = ctx.scenario.clone();
        let robot = Pose2::new(s.robot[0], s.robot[1], s.robot[2]);
        let mut world = World::new(s.field, s.sim, s.referee, robot, s.ball, ctx.seed ^ 0x5157);
        world.obstacles = s.obstacles.iter().map(|&o| o.into()).collect();
        let kick_fraction = ctx
            .library
            .get("kick")
            .and_then(|k| k.plan().ok())
            .map(|p| {
                // the keyframe at the nominal impact time, after any time scaling
                let k = p
                    .motion
                    .keyframes
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1.t - KICK_IMPACT).abs().total_cmp(&(b.1.t - KICK_IMPACT).abs()))
                    .map_or(0, |(i, _)| i);
                (p.times[k] / p.end_time()).min(1.0)
            })
            .unwrap_or(0.5);
        let bus = &ctx.bus;
        let b = |x: crate::msgbus::BusError| e(x.to_string());
        let (detections, image) = match s.mode {
            ObservationMode::Geometric => (Some(bus.advertise(topics::DETECTIONS, "detections").map_err(b)?), None),
            ObservationMode::Rendered => (None, Some(bus.advertise(topics::CAMERA_IMAGE, "image").map_err(b)?)),
        };
        let inbox = Arc::new(Mutex::new(Vec::new()));
        let tx = inbox.clone();
        bus.register_service(topics::SRV_SCENARIO, move |req| match req {
            Message::Text(cmd) => {
                tx.lock().unwrap().push(cmd);
                Message::ack(true, "queued")
            }
            _ => Message::ack(false, "expected a text command"),
        })
        .map_err(b)?;
        let mut events = s.events.clone();
        events.sort_by(|a, b| a.time().total_cmp(&b.time()));
        Ok(Self {
            world,
            scenario: Scenario { events, ..s },
            next_event: 0,
            rng: ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x0b5e),
            period: ctx.period,
            last_now: None,
            obs_next: 0.0,
            game_next: 0.0,
            kick_fraction,
            neck_yaw: ctx.model.joint_index("neck_yaw").ok(),
            model: ctx.model.clone(),
            status: MotionStatus::default(),
            odom: None,
            q: crate::control::stand_pose(&ctx.model),
            awaiting_resume: false,
            image_seed: ctx.seed,
            inbox,
            odometry: bus.subscribe(topics::ODOMETRY, "odometry", 256).map_err(b)?,
            motion: bus.subscribe(topics::MOTION_STATUS, "motion_status", 256).map_err(b)?,
            joints: bus.subscribe(topics::JOINT_STATES, "joint_state", 4).map_err(b)?,
            truth: bus.advertise(topics::SIM_TRUTH, "world_truth").map_err(b)?,
            game: bus.advertise(topics::GAME_STATE, "game_state").map_err(b)?,
            detections,
            image,
            bus: bus.clone(),
            report: ctx.report.clone(),
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    fn apply(&mut self, ev: ScenarioEvent) {
        match ev {
            ScenarioEvent::Fall { direction, .. } => self.world.inject_fall(direction),
            ScenarioEvent::Penalize { .. } => self.world.referee.set_penalized(true),
            ScenarioEvent::Unpenalize { .. } => self.world.referee.set_penalized(false),
            ScenarioEvent::PlaceBall { position, .. } => {
                self.world.ball = position;
                self.world.ball_velocity = [0.0; 2];
            }
        }
    }

    fn command(&mut self, cmd: &str) {
        let mut it = cmd.split_whitespace();
        let t = self.world.time;
        let ev = match (it.next(), it.next(), it.next()) {
            (Some("fall"), Some(dir), None) => match serde_json::from_value(serde_json::Value::String(dir.into())) {
                Ok(direction) => Some(ScenarioEvent::Fall { t, direction }),
                Err(_) => None,
            },
            (Some("penalize"), None, None) => Some(ScenarioEvent::Penalize { t }),
            (Some("unpenalize"), None, None) => Some(ScenarioEvent::Unpenalize { t }),
            (Some("place_ball"), Some(x), Some(y)) => match (x.parse(), y.parse()) {
                (Ok(x), Ok(y)) => Some(ScenarioEvent::PlaceBall { t, position: [x, y] }),
                _ => None,
            },
            _ => None,
        };
        match ev {
            Some(ev) => self.apply(ev),
            None => log::warn!("world_sim: ignoring command `{cmd}`"),
        }
    }

    fn observe(&mut self, now: f64) -> Result<(), String> {
        let head_yaw = self.neck_yaw.and_then(|i| self.q.get(i).copied()).unwrap_or(0.0);
        if let Some(p) = &mut self.detections {
            let d = if self.world.fallen() {
                DetectionSet::default()
            } else {
                geometric_observations(&self.world, head_yaw, &self.scenario.observation, &mut self.rng)
            };
            p.publish(now, Message::Detections(d)).map_err(|e| e.to_string())?;
        }
        if let Some(p) = &mut self.image {
            let rpy = self.world.trunk_rpy();
            let pose = CameraPose::from_model(&self.model, &self.q, rpy[0], rpy[1]).map_err(|e| e.to_string())?;
            let pipeline = VisionPipeline::default();
            self.image_seed = self.image_seed.wrapping_add(1);
            let img: ImageMsg = render(
                &scene_of(&self.world),
                &pipeline.camera,
                &pose,
                IMAGE_NOISE,
                self.image_seed,
            );
            p.publish(now, Message::Image(img)).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// Keyframe time of the kick motion at which the foot meets the ball, s.
const KICK_IMPACT: f64 = 1.0;

impl Node for SimNode {
    fn name(&self) -> &'static str {
        "world_sim"
    }

    fn step(&mut self, now: f64) -> Result<(), String> {
        let dt = match self.last_now {
            Some(l) if now > l => now - l,
            Some(_) => return Ok(()),
            None => self.period,
        };
        self.last_now = Some(now);
        let commands: Vec<String> = std::mem::take(&mut *self.inbox.lock().unwrap());
        for c in commands {
            self.command(&c);
        }
        while let Some(&ev) = self.scenario.events.get(self.next_event) {
            if ev.time() > self.world.time + 1e-9 {
                break;
            }
            self.apply(ev);
            self.next_event += 1;
        }

        let mut kick = false;
        for m in self.motion.drain() {
            if let Message::MotionStatus(s) = m.payload {
                let was = if self.status.playing.as_deref() == Some("kick") {
                    self.status.progress
                } else {
                    0.0
                };
                if s.playing.as_deref() == Some("kick") && was < self.kick_fraction && s.progress >= self.kick_fraction
                {
                    kick = true;
                }
                self.status = s;
            }
        }
        let mut inc = (0.0, 0.0, 0.0);
        if let Some(m) = self.odometry.drain().pop() {
            if let Message::Odometry(o) = m.payload {
                if let Some(prev) = self.odom {
                    let [dx, dy] = prev.to_local([o.x, o.y]);
                    inc = (dx, dy, wrap_angle(o.theta - prev.theta));
                }
                self.odom = Some(o);
            }
        }
        if let Some(m) = self.joints.latest() {
            if let Message::JointState(j) = m.payload {
                self.q = j.q;
            }
        }
        let getup = matches!(self.status.playing.as_deref(), Some("getup_prone" | "getup_supine"));
        let input = StepInput {
            odometry: inc,
            walking: self.status.walking,
            kick,
            getup_progress: getup.then_some(self.status.progress),
        };
        let recoveries = self.world.recoveries;
        let event = self.world.step(dt, &input);
        if self.world.recoveries > recoveries {
            self.awaiting_resume = true;
        }
        if self.awaiting_resume && self.status.walking && self.status.fall == FallState::Ok {
            self.awaiting_resume = false;
            self.report.lock().unwrap().resumed += 1;
        }
        {
            let mut r = self.report.lock().unwrap();
            r.time = self.world.time;
            r.score = self.world.referee.score();
            r.falls = self.world.falls;
            r.recoveries = self.world.recoveries;
            if let RefereeEvent::Goal(true) = event {
                r.first_goal.get_or_insert(self.world.time);
            }
        }
        self.truth
            .publish(now, Message::WorldTruth(self.world.truth()))
            .map_err(|e| e.to_string())?;
        if now + 1e-9 >= self.game_next || !matches!(event, RefereeEvent::None) {
            self.game_next = now + 0.1;
            self.game
                .publish(now, Message::GameState(self.world.referee.info()))
                .map_err(|e| e.to_string())?;
        }
        if now + 1e-9 >= self.obs_next {
            self.obs_next = now + 1.0 / self.scenario.observation.rate;
            self.observe(now)?;
        }
        Ok(())
    }

    fn shutdown(&mut self) {
        self.bus.unregister_service(topics::SRV_SCENARIO);
    }
}

/// Runs the vision pipeline on camera frames (rendered observation mode).
/// In geometric mode the simulator publishes detections itself and this
/// node stays idle.
pub struct PerceptionNode {
    pipeline: VisionPipeline,
    model: RobotModel,
    images: Subscription,
    joints: Subscription,
    attitude: Subscription,
    q: Vec<f64>,
    rp: (f64, f64),
    detections: Publisher,
    small: Publisher,
    downscaler: Downscaler,
}

impl PerceptionNode {
    pub fn new(ctx: &NodeContext) -> Result<Self, LaunchError> {
        let e = init_err("perception");
        let b = |x: crate::msgbus::BusError| e(x.to_string());
        let mut pipeline = VisionPipeline::default();
        if let Some(lut) = &ctx.spec.lut {
            pipeline.lut = crate::perception::ColorLut::load(lut).map_err(|x| e(x.to_string()))?;
        }
        let bus = &ctx.bus;
        Ok(Self {
            pipeline,
            model: ctx.model.clone(),
            images: bus.subscribe(topics::CAMERA_IMAGE, "image", 2).map_err(b)?,
            joints: bus.subscribe(topics::JOINT_STATES, "joint_state", 4).map_err(b)?,
            attitude: bus.subscribe(topics::ATTITUDE, "attitude", 4).map_err(b)?,
            q: crate::control::stand_pose(&ctx.model),
            rp: (0.0, 0.0),
            detections: bus.advertise(topics::DETECTIONS, "detections").map_err(b)?,
            small: bus.advertise(topics::DOWNSCALED_IMAGE, "image").map_err(b)?,
            downscaler: Downscaler::new(4, 5.0).map_err(|x| e(x.to_string()))?,
        })
    }
}

impl Node for PerceptionNode {
    fn name(&self) -> &'static str {
        "perception"
    }

    fn step(&mut self, _now: f64) -> Result<(), String> {
        if let Some(m) = self.joints.latest() {
            if let Message::JointState(j) = m.payload {
                self.q = j.q;
            }
        }
        if let Some(m) = self.attitude.latest() {
            if let Message::Attitude(a) = m.payload {
                self.rp = (a.roll, a.pitch);
            }
        }
        let Some(TopicMessage {
            stamp,
            payload: Message::Image(img),
            ..
        }) = self.images.latest()
        else {
            return Ok(());
        };
        let pose = CameraPose::from_model(&self.model, &self.q, self.rp.0, self.rp.1).map_err(|e| e.to_string())?;
        match self.pipeline.process(&img, &pose) {
            Ok(d) => self
                .detections
                .publish(stamp, Message::Detections(d))
                .map_err(|e| e.to_string())?,
            Err(e) => log::warn!("perception: dropping frame at {stamp:.3}: {e}"),
        }
        if let Ok(Some(small)) = self.downscaler.push(&img, stamp) {
            self.small
                .publish(stamp, Message::Image(small))
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// Monte Carlo localization from detections, gait odometry and the compass.
pub struct LocalizationNode {
    mcl: Localizer,
    detections: Subscription,
    odometry: Subscription,
    imu: Subscription,
    odom_used: Option<Pose2>,
    odom_latest: Option<Pose2>,
    compass: Option<f64>,
    next: f64,
    particles_next: f64,
    belief: Publisher,
    particles: Publisher,
}

const LOCALIZATION_PERIOD: f64 = 0.04;

impl LocalizationNode {
    pub fn new(ctx: &NodeContext) -> Result<Self, LaunchError> {
        let e = init_err("state_estimation");
        let b = |x: crate::msgbus::BusError| e(x.to_string());
        let bus = &ctx.bus;
        Ok(Self {
            mcl: Localizer::new(MclParams::default(), ctx.scenario.field, ctx.seed ^ 0x3c1),
            detections: bus.subscribe(topics::DETECTIONS, "detections", 16).map_err(b)?,
            odometry: bus.subscribe(topics::ODOMETRY, "odometry", 4).map_err(b)?,
            imu: bus.subscribe(topics::IMU, "imu", 4).map_err(b)?,
            odom_used: None,
            odom_latest: None,
            compass: None,
            next: 0.0,
            particles_next: 0.0,
            belief: bus.advertise(topics::POSE_BELIEF, "pose_belief").map_err(b)?,
            particles: bus.advertise(topics::PARTICLES, "particles").map_err(b)?,
        })
    }

    fn update(&mut self, now: f64, detections: &DetectionSet) -> Result<(), String> {
        let inc = match (self.odom_used, self.odom_latest) {
            (Some(a), Some(b)) => {
                let [dx, dy] = a.to_local([b.x, b.y]);
                (dx, dy, wrap_angle(b.theta - a.theta))
            }
            _ => (0.0, 0.0, 0.0),
        };
        self.odom_used = self.odom_latest;
        let belief = self.mcl.step(inc, detections, self.compass);
        self.belief
            .publish(now, Message::PoseBelief(belief))
            .map_err(|e| e.to_string())?;
        if now + 1e-9 >= self.particles_next {
            self.particles_next = now + 0.2;
            let ps = self
                .mcl
                .particles()
                .iter()
                .map(|p| [p.pose.x, p.pose.y, p.pose.theta])
                .collect();
            self.particles
                .publish(now, Message::Particles(ps))
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

impl Node for LocalizationNode {
    fn name(&self) -> &'static str {
        "state_estimation"
    }

    fn step(&mut self, now: f64) -> Result<(), String> {
        if let Some(m) = self.odometry.latest() {
            if let Message::Odometry(o) = m.payload {
                self.odom_latest = Some(o);
            }
        }
        if let Some(m) = self.imu.latest() {
            if let Message::Imu(i) = m.payload {
                let [c, s] = i.compass;
                self.compass = (c != 0.0 || s != 0.0).then(|| s.atan2(c));
            }
        }
        let frames = self.detections.drain();
        if frames.is_empty() {
            if now + 1e-9 >= self.next {
                self.next = now + LOCALIZATION_PERIOD;
                self.update(now, &DetectionSet::default())?;
            }
            return Ok(());
        }
        for m in frames {
            if let Message::Detections(d) = m.payload {
                self.next = now + LOCALIZATION_PERIOD;
                self.update(now, &d)?;
            }
        }
        Ok(())
    }
}

pub struct BehaviorWrapper {
    node: BehaviorNode,
}

impl BehaviorWrapper {
    pub fn new(ctx: &NodeContext) -> Result<Self, LaunchError> {
        let node = BehaviorNode::new(&ctx.bus, &ctx.config, ctx.scenario.field.opponent_goal())
            .map_err(|x| init_err("behavior")(x.to_string()))?;
        Ok(Self { node })
    }
}

impl Node for BehaviorWrapper {
    fn name(&self) -> &'static str {
        "behavior"
    }

    fn step(&mut self, now: f64) -> Result<(), String> {
        self.node.tick(now).map(|_| ()).map_err(|e| e.to_string())
    }
}

/// Plot values derived from a bus message.
pub fn plot_samples(topic: &str, msg: &Message) -> Vec<(String, f64)> {
    let p = |k: &str| format!("{topic}/{k}");
    match msg {
        Message::Float(v) => vec![(topic.to_string(), *v)],
        Message::PoseBelief(b) => vec![
            (p("x"), b.pose.x),
            (p("y"), b.pose.y),
            (p("theta"), b.pose.theta),
            (p("confidence"), b.confidence),
        ],
        Message::WorldTruth(t) => vec![
            (p("x"), t.robot.x),
            (p("y"), t.robot.y),
            (p("theta"), t.robot.theta),
            (p("ball_x"), t.ball[0]),
            (p("ball_y"), t.ball[1]),
            (p("roll"), t.trunk_rpy[0]),
            (p("pitch"), t.trunk_rpy[1]),
        ],
        Message::Attitude(a) => vec![(p("roll"), a.roll), (p("pitch"), a.pitch), (p("yaw"), a.yaw)],
        Message::GaitCommand(g) => vec![(p("vx"), g.vx), (p("vy"), g.vy), (p("omega"), g.omega)],
        Message::MotionStatus(s) => vec![(p("effort"), s.effort), (p("progress"), s.progress)],
        Message::Imu(i) => vec![(p("battery"), i.battery), (p("max_temp"), i.max_temp)],
        Message::Activations(a) | Message::Diagnostics(a) => a
            .iter()
            .map(|(k, v)| (format!("{topic}/{}", k.replace(' ', "_")), *v))
            .collect(),
        Message::Odometry(o) => vec![(p("x"), o.x), (p("y"), o.y), (p("theta"), o.theta)],
        _ => Vec::new(),
    }
}

/// Topics never kept in telemetry history or bags (bulky).
pub const UNRECORDED: [&str; 2] = [topics::CAMERA_IMAGE, topics::DOWNSCALED_IMAGE];

/// State the telemetry node shares with the launcher.
#[derive(Clone)]
pub struct TelemetryShared {
    pub plots: Arc<PlotStore>,
    pub history: Arc<TopicHistory>,
    pub recorder: Arc<Mutex<BagRecorder>>,
}

pub struct TelemetryNode {
    shared: TelemetryShared,
    monitor: Subscription,
    gateway: Option<Gateway>,
    diagnostics: Publisher,
    diag_next: f64,
    bag_file: Option<std::path::PathBuf>,
}

impl TelemetryNode {
    pub fn new(ctx: &NodeContext) -> Result<(Self, TelemetryShared), LaunchError> {
        let e = init_err("telemetry");
        let t = &ctx.spec.telemetry;
        let capacity = (t.retention / ctx.period).ceil().max(1.0) as usize;
        let record = (!t.record.is_empty()).then_some(t.record.as_slice());
        let shared = TelemetryShared {
            plots: Arc::new(PlotStore::new(capacity)),
            history: Arc::new(TopicHistory::new(capacity)),
            recorder: Arc::new(Mutex::new(BagRecorder::detached(record).exclude(&UNRECORDED))),
        };
        let monitor = ctx.bus.monitor(1 << 16).map_err(|x| e(x.to_string()))?;
        let gateway = match &t.gateway {
            Some(addr) => {
                let gctx = GatewayContext::new(
                    ctx.bus.clone(),
                    ctx.config.clone(),
                    shared.plots.clone(),
                    shared.history.clone(),
                );
                Some(Gateway::serve(addr, gctx).map_err(|x| e(format!("gateway on {addr}: {x}")))?)
            }
            None => None,
        };
        let node = Self {
            shared: shared.clone(),
            monitor,
            gateway,
            diagnostics: ctx
                .bus
                .advertise(topics::DIAGNOSTICS, "diagnostics")
                .map_err(|x| e(x.to_string()))?,
            diag_next: 0.0,
            bag_file: t.bag.clone(),
        };
        Ok((node, shared))
    }

    pub fn gateway_addr(&self) -> Option<std::net::SocketAddr> {
        self.gateway.as_ref().map(Gateway::local_addr)
    }

    fn absorb(&mut self) {
        let msgs = self.monitor.drain();
        if msgs.is_empty() {
            return;
        }
        let mut rec = self.shared.recorder.lock().unwrap();
        for m in msgs {
            if UNRECORDED.contains(&m.topic.as_str()) {
                continue;
            }
            for (path, v) in plot_samples(&m.topic, &m.payload) {
                self.shared.plots.record_if_newer(&path, m.stamp, v);
            }
            self.shared.history.push(m.clone());
            rec.record(m);
        }
    }
}

impl Node for TelemetryNode {
    fn name(&self) -> &'static str {
        "telemetry"
    }

    fn period(&self) -> Option<f64> {
        Some(0.02)
    }

    fn step(&mut self, now: f64) -> Result<(), String> {
        self.absorb();
        if now + 1e-9 >= self.diag_next {
            self.diag_next = now + 1.0;
            let mut d = BTreeMap::new();
            d.insert("telemetry_dropped".to_string(), self.monitor.dropped() as f64);
            d.insert("plot_series".to_string(), self.shared.plots.paths().len() as f64);
            if let Some(g) = &self.gateway {
                d.insert("gateway_clients".to_string(), g.client_count() as f64);
            }
            self.diagnostics
                .publish(now, Message::Diagnostics(d))
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    fn shutdown(&mut self) {
        self.absorb();
        if let Some(g) = &mut self.gateway {
            g.stop();
        }
        self.gateway = None;
        if let Some(file) = self.bag_file.take() {
            let bag = self.shared.recorder.lock().unwrap().bag();
            match bag.save(&file) {
                Ok(()) => log::info!("bag with {} records written to {}", bag.records.len(), file.display()),
                Err(e) => log::error!("cannot write bag {}: {e}", file.display()),
            }
        }
    }
}
