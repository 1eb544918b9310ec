//! Soccer behaviors for the two layers.

use super::framework::{Behavior, BehaviorError, Contribution, Hierarchy, Layer, SensorView};
use super::state_controller::{State, StateController, Transition};
use crate::geometry::wrap_angle;
use crate::messages::{FallState, GaitCommand, GamePhase, Gaze};
use std::sync::{Arc, RwLock};

pub const KICK_MOTION: &str = "kick";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoccerParams {
    /// distance kept behind the ball when lining up, m
    pub standoff: f64,
    pub kick_x: [f64; 2],
    pub kick_y: f64,
    /// rad
    pub kick_alpha: f64,
    /// heading error below which dribbling is allowed, rad
    pub dribble_alpha: f64,
    pub max_vx: f64,
    pub max_vy: f64,
    pub max_omega: f64,
    pub gain_xy: f64,
    pub gain_theta: f64,
    /// keep-out distance from obstacle centers, m
    pub obstacle_radius: f64,
    /// obstacles closer than this repel, m
    pub obstacle_influence: f64,
    pub obstacle_gain: f64,
    pub search_omega: f64,
    /// camera height used to aim the gaze, m
    pub camera_height: f64,
}

impl Default for SoccerParams {
    fn default() -> Self {
        Self {
            standoff: 0.17,
            kick_x: [0.10, 0.25],
            kick_y: 0.12,
            kick_alpha: 20f64.to_radians(),
            dribble_alpha: 30f64.to_radians(),
            max_vx: 0.25,
            max_vy: 0.15,
            max_omega: 0.6,
            gain_xy: 1.5,
            gain_theta: 1.5,
            obstacle_radius: 0.4,
            obstacle_influence: 0.9,
            obstacle_gain: 1.5,
            search_omega: 0.4,
            camera_height: 0.85,
        }
    }
}

pub type SharedParams = Arc<RwLock<SoccerParams>>;

fn params(p: &SharedParams) -> SoccerParams {
    *p.read().expect("soccer params lock")
}

fn halt() -> GaitCommand {
    GaitCommand::default()
}

fn playing(view: &SensorView) -> bool {
    view.signal("play") > 0.5
}

/// Goal direction relative to the robot heading; straight ahead when the
/// pose is unknown.
fn goal_local(view: &SensorView) -> [f64; 2] {
    view.goal_local().unwrap_or([4.0, 0.0])
}

/// Heading error toward the goal as seen from the ball.
fn aim_error(view: &SensorView, ball: [f64; 2]) -> f64 {
    let g = goal_local(view);
    (g[1] - ball[1]).atan2(g[0] - ball[0])
}

pub fn in_kick_window(ball: [f64; 2], p: &SoccerParams) -> bool {
    (p.kick_x[0]..=p.kick_x[1]).contains(&ball[0]) && ball[1].abs() <= p.kick_y
}

/// Kick iff the ball is in the window and the heading error is below α_max.
pub fn kick_decision(ball: [f64; 2], aim_error: f64, p: &SoccerParams) -> bool {
    in_kick_window(ball, p) && aim_error.abs() < p.kick_alpha
}

/// Lining-up pose behind the ball, in the frame of the inputs: position
/// `ball − d·unit(goal − ball)` and heading toward the goal.
pub fn go_behind_ball_target(ball: [f64; 2], goal: [f64; 2], standoff: f64) -> [f64; 3] {
    let (dx, dy) = (goal[0] - ball[0], goal[1] - ball[1]);
    let n = dx.hypot(dy).max(1e-9);
    [ball[0] - standoff * dx / n, ball[1] - standoff * dy / n, dy.atan2(dx)]
}

/// Proportional walk toward an egocentric target pose with obstacle
/// repulsion. Motion toward an obstacle inside the keep-out radius is removed.
pub fn walk_to(target: [f64; 3], obstacles: &[[f64; 2]], p: &SoccerParams) -> GaitCommand {
    let dist = target[0].hypot(target[1]);
    let mut dir = if dist > 1e-9 {
        [target[0] / dist, target[1] / dist]
    } else {
        [0.0, 0.0]
    };
    let speed = (p.gain_xy * dist).min(1.0);
    for o in obstacles {
        let d = o[0].hypot(o[1]);
        if d < p.obstacle_influence && d > 1e-9 {
            let away = [-o[0] / d, -o[1] / d];
            let k = p.obstacle_gain
                * ((p.obstacle_influence - d) / (p.obstacle_influence - p.obstacle_radius).max(1e-3)).min(3.0);
            dir[0] += k * away[0];
            dir[1] += k * away[1];
            // sidestep so the obstacle is passed instead of stalled against
            let side = if o[1] >= 0.0 { -1.0 } else { 1.0 };
            dir[1] += 0.5 * k * side;
        }
    }
    let n = dir[0].hypot(dir[1]);
    let mut v = if n > 1e-9 {
        [dir[0] / n * speed, dir[1] / n * speed]
    } else {
        [0.0, 0.0]
    };
    for o in obstacles {
        let d = o[0].hypot(o[1]);
        if d <= p.obstacle_radius + 0.1 && d > 1e-9 {
            let toward = (v[0] * o[0] + v[1] * o[1]) / d;
            if toward > 0.0 {
                v[0] -= toward * o[0] / d;
                v[1] -= toward * o[1] / d;
            }
        }
    }
    // turn toward the path while far, toward the final heading when close
    let w = ((dist - 0.2) / 0.4).clamp(0.0, 1.0);
    let path_heading = if dist > 1e-9 { target[1].atan2(target[0]) } else { 0.0 };
    let heading = wrap_angle(w * path_heading + (1.0 - w) * target[2]);
    let turn_slow = (1.0 - heading.abs() / std::f64::consts::PI).clamp(0.3, 1.0);
    GaitCommand {
        vx: (v[0] * p.max_vx * turn_slow).clamp(-p.max_vx, p.max_vx),
        vy: (v[1] * p.max_vy).clamp(-p.max_vy, p.max_vy),
        omega: (p.gain_theta * heading).clamp(-p.max_omega, p.max_omega),
        walk: true,
    }
}

/// Soccer layer: enables the control layer while the game is on.
pub struct PlaySoccer;

impl Behavior for PlaySoccer {
    fn name(&self) -> &str {
        "play_soccer"
    }
    fn activation(&mut self, view: &SensorView) -> f64 {
        (view.game.phase == GamePhase::Playing && !view.game.penalized) as u8 as f64
    }
    fn execute(&mut self, _: &SensorView, _: f64) -> Contribution {
        let mut c = Contribution::default();
        c.signals.insert("play".into(), 1.0);
        c
    }
}

/// Holds the robot still outside play or while fallen.
pub struct GameControl;

impl Behavior for GameControl {
    fn name(&self) -> &str {
        "game_control"
    }
    fn activation(&mut self, view: &SensorView) -> f64 {
        let fallen = view.motion.fall != FallState::Ok && view.motion.fall != FallState::Recovered;
        if !playing(view) || fallen {
            1.0
        } else {
            0.0
        }
    }
    fn execute(&mut self, _: &SensorView, _: f64) -> Contribution {
        Contribution {
            gait: Some(halt()),
            ..Contribution::default()
        }
    }
}

pub struct Kick {
    p: SharedParams,
}

impl Behavior for Kick {
    fn name(&self) -> &str {
        "kick"
    }
    fn activation(&mut self, view: &SensorView) -> f64 {
        if view.motion.playing.as_deref() == Some(KICK_MOTION) {
            return 1.0;
        }
        let p = params(&self.p);
        match view.ball {
            Some(b) if playing(view) && view.ball_age < 0.3 && kick_decision(b, aim_error(view, b), &p) => 1.0,
            _ => 0.0,
        }
    }
    fn execute(&mut self, view: &SensorView, _: f64) -> Contribution {
        let request = view.motion.playing.is_none();
        Contribution {
            gait: Some(halt()),
            motion: request.then(|| KICK_MOTION.to_string()),
            ..Contribution::default()
        }
    }
}

pub struct Dribble {
    p: SharedParams,
}

impl Behavior for Dribble {
    fn name(&self) -> &str {
        "dribble"
    }
    fn activation(&mut self, view: &SensorView) -> f64 {
        let p = params(&self.p);
        match view.ball {
            Some(b) if playing(view) => {
                let ahead = b[0] > 0.05 && b[0] < 0.5 && b[1].abs() < 0.1;
                (ahead && aim_error(view, b).abs() < p.dribble_alpha) as u8 as f64
            }
            _ => 0.0,
        }
    }
    fn execute(&mut self, view: &SensorView, _: f64) -> Contribution {
        let p = params(&self.p);
        let b = view.ball.unwrap_or([0.3, 0.0]);
        let err = aim_error(view, b);
        Contribution {
            gait: Some(GaitCommand {
                vx: p.max_vx,
                vy: (p.gain_xy * b[1]).clamp(-p.max_vy, p.max_vy),
                omega: (p.gain_theta * err).clamp(-p.max_omega, p.max_omega),
                walk: true,
            }),
            ..Contribution::default()
        }
    }
}

pub struct GoBehindBall {
    p: SharedParams,
}

impl Behavior for GoBehindBall {
    fn name(&self) -> &str {
        "go_behind_ball"
    }
    fn activation(&mut self, view: &SensorView) -> f64 {
        (view.ball.is_some() && playing(view)) as u8 as f64
    }
    fn execute(&mut self, view: &SensorView, _: f64) -> Contribution {
        let p = params(&self.p);
        let Some(ball) = view.ball else {
            return Contribution::default();
        };
        let goal = goal_local(view);
        let target = go_behind_ball_target(ball, goal, p.standoff);
        let mut obstacles: Vec<[f64; 2]> = view.obstacles.iter().map(|o| o.position).collect();
        // walk around the ball when on its goal side
        let (ux, uy) = {
            let (dx, dy) = (goal[0] - ball[0], goal[1] - ball[1]);
            let n = dx.hypot(dy).max(1e-9);
            (dx / n, dy / n)
        };
        let bn = ball[0].hypot(ball[1]).max(1e-9);
        let behind = (ball[0] * ux + ball[1] * uy) / bn;
        if behind < 0.7 {
            obstacles.push(ball);
        }
        let local = walk_to(
            target,
            &obstacles,
            &SoccerParams {
                obstacle_radius: if behind < 0.7 { 0.25 } else { p.obstacle_radius },
                ..p
            },
        );
        Contribution {
            gait: Some(local),
            ..Contribution::default()
        }
    }
}

/// Scan context shared by the search states.
pub struct ScanCtx {
    pub time: f64,
    pub gaze: Gaze,
}

struct LookAt {
    azimuth: f64,
    since: Option<f64>,
    hold: f64,
}

impl State<ScanCtx> for LookAt {
    fn enter(&mut self, ctx: &mut ScanCtx) {
        self.since = Some(ctx.time);
    }
    fn step(&mut self, ctx: &mut ScanCtx) -> Transition {
        ctx.gaze = Gaze {
            azimuth: self.azimuth,
            elevation: -0.45,
        };
        if ctx.time - self.since.unwrap_or(ctx.time) >= self.hold {
            Transition::Advance
        } else {
            Transition::Stay
        }
    }
}

const SCAN_PLAN: [&str; 4] = ["left", "center", "right", "center"];

fn scan_controller() -> StateController<ScanCtx> {
    let look = |azimuth| -> Box<dyn State<ScanCtx>> {
        Box::new(LookAt {
            azimuth,
            since: None,
            hold: 0.7,
        })
    };
    StateController::new(
        vec![
            ("left".into(), look(1.2)),
            ("center".into(), look(0.0)),
            ("right".into(), look(-1.2)),
        ],
        &SCAN_PLAN,
    )
    .expect("static scan plan")
}

/// Runs the scan plan over and over.
pub struct Scanner {
    sc: StateController<ScanCtx>,
    ctx: ScanCtx,
}

impl Default for Scanner {
    fn default() -> Self {
        Self {
            sc: scan_controller(),
            ctx: ScanCtx {
                time: 0.0,
                gaze: Gaze::default(),
            },
        }
    }
}

impl Scanner {
    pub fn step(&mut self, time: f64) -> Gaze {
        self.ctx.time = time;
        if self.sc.is_finished() {
            self.sc.replan(&SCAN_PLAN).expect("static scan plan");
        }
        let _ = self.sc.step(&mut self.ctx);
        self.ctx.gaze
    }
}

pub struct SearchBall {
    p: SharedParams,
    scan: Scanner,
}

impl Behavior for SearchBall {
    fn name(&self) -> &str {
        "search_ball"
    }
    fn activation(&mut self, view: &SensorView) -> f64 {
        (view.ball.is_none() && playing(view)) as u8 as f64
    }
    fn execute(&mut self, view: &SensorView, _: f64) -> Contribution {
        let p = params(&self.p);
        Contribution {
            gait: Some(GaitCommand {
                omega: p.search_omega,
                walk: true,
                ..GaitCommand::default()
            }),
            gaze: Some(self.scan.step(view.time)),
            ..Contribution::default()
        }
    }
}

pub struct HeadControl {
    p: SharedParams,
    scan: Scanner,
}

impl Behavior for HeadControl {
    fn name(&self) -> &str {
        "head_control"
    }
    fn activation(&mut self, _: &SensorView) -> f64 {
        1.0
    }
    fn execute(&mut self, view: &SensorView, _: f64) -> Contribution {
        let p = params(&self.p);
        let gaze = match view.ball {
            Some(b) => Gaze {
                azimuth: b[1].atan2(b[0]),
                elevation: -p.camera_height.atan2(b[0].hypot(b[1])),
            },
            None => self.scan.step(view.time),
        };
        Contribution {
            gaze: Some(gaze),
            ..Contribution::default()
        }
    }
}

/// The soccer hierarchy: soccer layer over control layer.
pub fn soccer_hierarchy(p: SharedParams) -> Result<Hierarchy, BehaviorError> {
    let soccer = Layer::new("soccer", vec![Box::new(PlaySoccer)], &[])?;
    let control = Layer::new(
        "control",
        vec![
            Box::new(GameControl),
            Box::new(Kick { p: p.clone() }),
            Box::new(SearchBall {
                p: p.clone(),
                scan: Scanner::default(),
            }),
            Box::new(Dribble { p: p.clone() }),
            Box::new(GoBehindBall { p: p.clone() }),
            Box::new(HeadControl {
                p,
                scan: Scanner::default(),
            }),
        ],
        &[
            ("game_control", "search_ball"),
            ("game_control", "go_behind_ball"),
            ("game_control", "dribble"),
            ("game_control", "kick"),
            ("kick", "go_behind_ball"),
            ("kick", "dribble"),
            ("kick", "search_ball"),
            ("search_ball", "go_behind_ball"),
            ("search_ball", "dribble"),
            ("search_ball", "head_control"),
            ("dribble", "go_behind_ball"),
        ],
    )?;
    Ok(Hierarchy {
        layers: vec![soccer, control],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn behind_ball_targets() {
        let t = go_behind_ball_target([2.0, 0.0], [4.5, 0.0], 0.2);
        assert!((t[0] - 1.8).abs() < 1e-12 && t[1].abs() < 1e-12 && t[2].abs() < 1e-12);
        let t = go_behind_ball_target([0.0, 1.0], [4.5, 1.0], 0.2);
        assert!((t[0] + 0.2).abs() < 1e-12 && (t[1] - 1.0).abs() < 1e-12 && t[2].abs() < 1e-12);
    }

    #[test]
    fn kick_window() {
        let p = SoccerParams::default();
        assert!(kick_decision([0.18, 0.06], 0.0, &p));
        assert!(!kick_decision([0.30, 0.0], 0.0, &p));
        assert!(!kick_decision([0.18, 0.06], 0.6, &p));
    }

    #[test]
    fn keep_out_blocks_approach() {
        let p = SoccerParams::default();
        let cmd = walk_to([2.0, 0.0, 0.0], &[[0.35, 0.0]], &p);
        assert!(cmd.vx <= 1e-12, "{cmd:?}");
    }
}
