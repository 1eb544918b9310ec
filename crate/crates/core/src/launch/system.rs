//! A launched system: nodes on one bus, stepped in lockstep or paced by the
//! wall clock, torn down in reverse start order.

use super::nodes::{
    BehaviorWrapper, ControlNode, LocalizationNode, Node, NodeContext, PerceptionNode, RunReport, SimNode,
    TelemetryNode, TelemetryShared,
};
use super::spec::{LaunchError, LaunchSpec};
use crate::config::ConfigServer;
use crate::control::{ClockMode, DEFAULT_PERIOD_NS};
use crate::model::RobotModel;
use crate::motion::MotionLibrary;
use crate::msgbus::Bus;
use crate::telemetry::Bag;
use crate::world::{Scenario, SuccessCriterion};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Order nodes are stepped in within one lockstep tick.
pub const STEP_ORDER: [&str; 6] = [
    "robot_control",
    "world_sim",
    "perception",
    "state_estimation",
    "behavior",
    "telemetry",
];

/// Order nodes are started in; teardown runs in reverse. Telemetry comes
/// first so it sees every message, control last so hardware is only
/// touched once everything else is up.
pub const START_ORDER: [&str; 6] = [
    "telemetry",
    "world_sim",
    "perception",
    "state_estimation",
    "behavior",
    "robot_control",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub name: String,
    pub criterion: SuccessCriterion,
    pub success: bool,
    pub report: RunReport,
}

impl ScenarioOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.success {
            0
        } else {
            1
        }
    }
}

pub fn evaluate(criterion: SuccessCriterion, r: &RunReport) -> bool {
    match criterion {
        SuccessCriterion::Goal => r.score[0] >= 1,
        SuccessCriterion::Recovered => {
            r.fault.is_none() && r.falls > 0 && r.recoveries == r.falls && r.resumed >= r.falls
        }
        SuccessCriterion::Complete => r.fault.is_none(),
    }
}

pub struct System {
    spec: LaunchSpec,
    bus: Bus,
    config: ConfigServer,
    scenario: Scenario,
    /// in start order
    nodes: Vec<Box<dyn Node>>,
    step_order: Vec<usize>,
    period: f64,
    cycles: u64,
    report: Arc<Mutex<RunReport>>,
    telemetry: Option<TelemetryShared>,
    gateway: Option<SocketAddr>,
    stopped: bool,
}

fn teardown(nodes: &mut Vec<Box<dyn Node>>) {
    while let Some(mut n) = nodes.pop() {
        log::debug!("stopping {}", n.name());
        n.shutdown();
    }
}

impl System {
    pub fn launch(spec: LaunchSpec) -> Result<Self, LaunchError> {
        Self::launch_on(spec, Bus::new(), ConfigServer::new())
    }

    /// Starts the nodes of `spec` on an existing bus and config server.
    pub fn launch_on(spec: LaunchSpec, bus: Bus, config: ConfigServer) -> Result<Self, LaunchError> {
        spec.validate()?;
        spec.apply_config(&config)?;
        config.attach_bus(&bus);
        let model = match &spec.model {
            Some(p) => RobotModel::load(p).map_err(|e| LaunchError::Invalid(e.to_string()))?,
            None => RobotModel::default_model(),
        };
        let library = match &spec.motions {
            Some(d) => MotionLibrary::load_dir(d).map_err(|e| LaunchError::Invalid(e.to_string()))?,
            None => MotionLibrary::bundled(),
        };
        let scenario = match &spec.scenario {
            Some(s) => Scenario::resolve(s)?,
            None => Scenario::default(),
        };
        let period = DEFAULT_PERIOD_NS as f64 * 1e-9;
        let report = Arc::new(Mutex::new(RunReport::default()));
        let ctx = NodeContext {
            bus: bus.clone(),
            config: config.clone(),
            model,
            library,
            scenario: scenario.clone(),
            spec: spec.clone(),
            seed: spec.seed,
            period,
            report: report.clone(),
        };
        let mut nodes: Vec<Box<dyn Node>> = Vec::new();
        let mut telemetry = None;
        let mut gateway = None;
        for name in START_ORDER {
            if !spec.has_node(name) {
                continue;
            }
            let made: Result<Box<dyn Node>, LaunchError> = match name {
                "telemetry" => TelemetryNode::new(&ctx).map(|(n, shared)| {
                    telemetry = Some(shared);
                    gateway = n.gateway_addr();
                    Box::new(n) as Box<dyn Node>
                }),
                "world_sim" => SimNode::new(&ctx).map(|n| Box::new(n) as Box<dyn Node>),
                "perception" => PerceptionNode::new(&ctx).map(|n| Box::new(n) as Box<dyn Node>),
                "state_estimation" => LocalizationNode::new(&ctx).map(|n| Box::new(n) as Box<dyn Node>),
                "behavior" => BehaviorWrapper::new(&ctx).map(|n| Box::new(n) as Box<dyn Node>),
                "robot_control" => ControlNode::new(&ctx).map(|n| Box::new(n) as Box<dyn Node>),
                _ => unreachable!("START_ORDER lists known nodes"),
            };
            match made {
                Ok(n) => {
                    log::info!("started {name}");
                    nodes.push(n);
                }
                Err(e) => {
                    log::error!("{e}; tearing down {} started node(s)", nodes.len());
                    teardown(&mut nodes);
                    return Err(e);
                }
            }
        }
        let step_order = STEP_ORDER
            .iter()
            .filter_map(|s| nodes.iter().position(|n| n.name() == *s))
            .collect();
        Ok(Self {
            spec,
            bus,
            config,
            scenario,
            nodes,
            step_order,
            period,
            cycles: 0,
            report,
            telemetry,
            gateway,
            stopped: false,
        })
    }

    pub fn spec(&self) -> &LaunchSpec {
        &self.spec
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn config(&self) -> &ConfigServer {
        &self.config
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn node_names(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.name()).collect()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Lockstep time of the next tick, s.
    pub fn time(&self) -> f64 {
        self.cycles as f64 * self.period
    }

    pub fn report(&self) -> RunReport {
        self.report.lock().unwrap().clone()
    }

    pub fn telemetry(&self) -> Option<&TelemetryShared> {
        self.telemetry.as_ref()
    }

    pub fn gateway_addr(&self) -> Option<SocketAddr> {
        self.gateway
    }

    /// Everything recorded so far (telemetry node required).
    pub fn bag(&self) -> Option<Bag> {
        self.telemetry.as_ref().map(|t| t.recorder.lock().unwrap().bag())
    }

    /// One lockstep tick: every node once, in [`STEP_ORDER`].
    pub fn step(&mut self) -> Result<(), LaunchError> {
        if self.stopped {
            return Err(LaunchError::Invalid("system is stopped".into()));
        }
        let now = self.time();
        for &i in &self.step_order {
            let n = &mut self.nodes[i];
            n.step(now).map_err(|reason| LaunchError::Runtime {
                node: n.name().to_string(),
                reason,
            })?;
        }
        self.cycles += 1;
        Ok(())
    }

    pub fn run_for(&mut self, seconds: f64) -> Result<(), LaunchError> {
        let n = (seconds / self.period).round() as u64;
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.spec.duration.unwrap_or(self.scenario.duration)
    }

    /// Runs the scenario in lockstep and judges it. A goal criterion ends
    /// the run at the first goal.
    pub fn run_scenario(&mut self) -> Result<ScenarioOutcome, LaunchError> {
        let end = (self.duration() / self.period).round() as u64;
        let criterion = self.scenario.success;
        while self.cycles < end {
            self.step()?;
            if criterion == SuccessCriterion::Goal && self.cycles % 16 == 0 && self.report().score[0] >= 1 {
                break;
            }
        }
        let report = self.report();
        Ok(ScenarioOutcome {
            name: self.scenario.name.clone(),
            criterion,
            success: evaluate(criterion, &report),
            report,
        })
    }

    /// Runs every node on its own thread, paced by the monotonic clock,
    /// until `duration` elapses or `stop` is set.
    pub fn run_wall_clock(&mut self, duration: Option<Duration>, stop: &AtomicBool) -> Result<RunReport, LaunchError> {
        let halt = AtomicBool::new(false);
        let start = Instant::now();
        let period = self.period;
        let failure: Mutex<Option<LaunchError>> = Mutex::new(None);
        std::thread::scope(|s| {
            for n in &mut self.nodes {
                let (halt, failure) = (&halt, &failure);
                s.spawn(move || {
                    if let Err(reason) = n.run_wall_clock(start, period, halt) {
                        log::error!("{} failed: {reason}", n.name());
                        failure.lock().unwrap().get_or_insert(LaunchError::Runtime {
                            node: n.name().to_string(),
                            reason,
                        });
                        halt.store(true, Ordering::Relaxed);
                    }
                });
            }
            while !halt.load(Ordering::Relaxed)
                && !stop.load(Ordering::Relaxed)
                && duration.is_none_or(|d| start.elapsed() < d)
            {
                std::thread::sleep(Duration::from_millis(5));
            }
            halt.store(true, Ordering::Relaxed);
        });
        self.cycles += (start.elapsed().as_secs_f64() / period) as u64;
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        Ok(self.report())
    }

    /// Runs according to the launch file's clock mode.
    pub fn run(&mut self, stop: &AtomicBool) -> Result<RunReport, LaunchError> {
        match self.spec.clock {
            ClockMode::Lockstep => {
                let end = (self.duration() / self.period).round() as u64;
                while self.cycles < end && !stop.load(Ordering::Relaxed) {
                    self.step()?;
                }
                Ok(self.report())
            }
            ClockMode::WallClock => {
                let d = self.spec.duration.map(Duration::from_secs_f64);
                self.run_wall_clock(d, stop)
            }
        }
    }

    /// Stops every node in reverse start order. Idempotent.
    pub fn stop(&mut self) {
        if !self.stopped {
            self.stopped = true;
            teardown(&mut self.nodes);
            self.step_order.clear();
        }
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }
}

impl Drop for System {
    fn drop(&mut self) {
        self.stop();
    }
}
