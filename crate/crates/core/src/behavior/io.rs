//! Bus adapter for the behavior hierarchy: turns messages into a
//! [`SensorView`] and outputs back into gait, gaze and motion requests.

use super::framework::{ActuatorOutputs, BehaviorError, Hierarchy, SensorView};
use super::soccer::{soccer_hierarchy, SharedParams, SoccerParams};
use crate::config::{ConfigError, ConfigServer, ParamHandle};
use crate::geometry::Pose2;
use crate::messages::{GaitCommand, Gaze, Message, ObstacleObs};
use crate::msgbus::{Bus, BusError, Publisher, Subscription};
use crate::topics;
use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BehaviorNodeError {
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
}

/// Moves an egocentric point into the frame after an odometry increment.
fn shift(p: [f64; 2], prev: &Pose2, now: &Pose2) -> [f64; 2] {
    now.to_local(prev.to_world(p))
}

struct Handles {
    standoff: ParamHandle,
    kick_alpha: ParamHandle,
    max_vx: ParamHandle,
    obstacle_radius: ParamHandle,
    ball_memory: ParamHandle,
}

pub struct BehaviorNode {
    hierarchy: Hierarchy,
    params: SharedParams,
    handles: Handles,
    period: f64,
    next: f64,
    view: SensorView,
    ball: Option<([f64; 2], f64)>,
    obstacles: Vec<(ObstacleObs, f64)>,
    odom: Option<Pose2>,
    last_request: Option<(String, f64)>,
    subs: BTreeMap<&'static str, Subscription>,
    gait: Publisher,
    gaze: Publisher,
    motion: Publisher,
    activations: Publisher,
    pub last_outputs: ActuatorOutputs,
}

impl BehaviorNode {
    pub fn new(bus: &Bus, config: &ConfigServer, goal: [f64; 2]) -> Result<Self, BehaviorNodeError> {
        let d = SoccerParams::default();
        let handles = Handles {
            standoff: config.float("/behavior/standoff", d.standoff, 0.05, 0.6)?,
            kick_alpha: config.float("/behavior/kick_alpha_deg", d.kick_alpha.to_degrees(), 1.0, 90.0)?,
            max_vx: config.float("/behavior/max_vx", d.max_vx, 0.0, 0.5)?,
            obstacle_radius: config.float("/behavior/obstacle_radius", d.obstacle_radius, 0.1, 2.0)?,
            ball_memory: config.float("/behavior/ball_memory", 2.0, 0.0, 10.0)?,
        };
        let rate = config.float("/behavior/rate", 50.0, 1.0, 200.0)?.f64();
        let params: SharedParams = Arc::new(RwLock::new(d));
        let mut subs = BTreeMap::new();
        subs.insert(topics::DETECTIONS, bus.subscribe(topics::DETECTIONS, "detections", 8)?);
        subs.insert(
            topics::POSE_BELIEF,
            bus.subscribe(topics::POSE_BELIEF, "pose_belief", 4)?,
        );
        subs.insert(topics::GAME_STATE, bus.subscribe(topics::GAME_STATE, "game_state", 4)?);
        subs.insert(topics::ATTITUDE, bus.subscribe(topics::ATTITUDE, "attitude", 4)?);
        subs.insert(
            topics::MOTION_STATUS,
            bus.subscribe(topics::MOTION_STATUS, "motion_status", 4)?,
        );
        subs.insert(topics::ODOMETRY, bus.subscribe(topics::ODOMETRY, "odometry", 16)?);
        Ok(Self {
            hierarchy: soccer_hierarchy(params.clone())?,
            params,
            handles,
            period: 1.0 / rate,
            next: 0.0,
            view: SensorView {
                goal,
                ..SensorView::default()
            },
            ball: None,
            obstacles: Vec::new(),
            odom: None,
            last_request: None,
            subs,
            gait: bus.advertise(topics::GAIT_COMMAND, "gait_command")?,
            gaze: bus.advertise(topics::GAZE, "gaze")?,
            motion: bus.advertise(topics::MOTION_PLAY, "motion_request")?,
            activations: bus.advertise(topics::ACTIVATIONS, "activations")?,
            last_outputs: ActuatorOutputs::default(),
        })
    }

    fn refresh_params(&self) {
        let mut p = self.params.write().expect("soccer params lock");
        p.standoff = self.handles.standoff.f64();
        p.kick_alpha = self.handles.kick_alpha.f64().to_radians();
        p.max_vx = self.handles.max_vx.f64();
        p.obstacle_radius = self.handles.obstacle_radius.f64();
        p.obstacle_influence = p.obstacle_influence.max(p.obstacle_radius + 0.2);
    }

    fn drain(&mut self, now: f64) {
        for (topic, sub) in &self.subs {
            for m in sub.drain() {
                match (*topic, m.payload) {
                    (topics::ODOMETRY, Message::Odometry(o)) => {
                        if let Some(prev) = self.odom {
                            if let Some((b, t)) = self.ball {
                                self.ball = Some((shift(b, &prev, &o), t));
                            }
                            for (obs, _) in &mut self.obstacles {
                                obs.position = shift(obs.position, &prev, &o);
                            }
                        }
                        self.odom = Some(o);
                    }
                    (topics::DETECTIONS, Message::Detections(d)) => {
                        if let Some(b) = d.ball {
                            self.ball = Some((b.position, m.stamp));
                        }
                        if !d.obstacles.is_empty() {
                            self.obstacles = d.obstacles.iter().map(|o| (*o, m.stamp)).collect();
                        }
                    }
                    (topics::POSE_BELIEF, Message::PoseBelief(b)) => self.view.pose = Some(b),
                    (topics::GAME_STATE, Message::GameState(g)) => self.view.game = g,
                    (topics::ATTITUDE, Message::Attitude(a)) => self.view.attitude = a,
                    (topics::MOTION_STATUS, Message::MotionStatus(s)) => self.view.motion = s,
                    _ => {}
                }
            }
        }
        let memory = self.handles.ball_memory.f64();
        self.obstacles.retain(|(_, t)| now - t <= memory);
        self.view.time = now;
        self.view.obstacles = self.obstacles.iter().map(|(o, _)| *o).collect();
        match self.ball {
            Some((b, t)) if now - t <= memory => {
                self.view.ball = Some(b);
                self.view.ball_age = now - t;
            }
            _ => {
                self.view.ball = None;
                self.view.ball_age = f64::INFINITY;
            }
        }
    }

    pub fn view(&self) -> &SensorView {
        &self.view
    }

    /// Runs the hierarchy when its period has elapsed.
    pub fn tick(&mut self, now: f64) -> Result<bool, BusError> {
        if now + 1e-9 < self.next {
            return Ok(false);
        }
        self.next = now + self.period;
        self.refresh_params();
        self.drain(now);
        let (out, activations) = self.hierarchy.step(&self.view);
        let gait = out.gait.unwrap_or(GaitCommand::default());
        self.gait.publish(now, Message::GaitCommand(gait))?;
        if let Some(g) = out.gaze {
            self.gaze.publish(now, Message::Gaze(g))?;
        } else {
            self.gaze.publish(
                now,
                Message::Gaze(Gaze {
                    azimuth: 0.0,
                    elevation: -0.45,
                }),
            )?;
        }
        if let Some(m) = &out.motion {
            let already = self.view.motion.playing.as_deref() == Some(m.as_str());
            let recent = matches!(&self.last_request, Some((n, t)) if n == m && now - t < 1.0);
            if !already && !recent {
                self.motion.publish(now, Message::MotionRequest { name: m.clone() })?;
                self.last_request = Some((m.clone(), now));
            }
        }
        self.activations.publish(now, Message::Activations(activations))?;
        self.last_outputs = out;
        Ok(true)
    }
}
