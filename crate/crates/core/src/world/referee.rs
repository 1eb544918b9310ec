//! Simulated game controller: timed phases and goal detection.

use crate::field::FieldSpec;
use crate::messages::{GameInfo, GamePhase};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefereeParams {
    /// s spent in each pre-game phase
    pub initial: f64,
    pub ready: f64,
    pub set: f64,
    /// s of playing time
    pub game_length: f64,
}

impl Default for RefereeParams {
    fn default() -> Self {
        Self {
            initial: 2.0,
            ready: 5.0,
            set: 2.0,
            game_length: 600.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefereeEvent {
    None,
    PhaseChange(GamePhase),
    /// `true` when we scored
    Goal(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Referee {
    pub params: RefereeParams,
    phase: GamePhase,
    in_phase: f64,
    played: f64,
    score: [u32; 2],
    penalized: bool,
    kickoff: bool,
    /// simulation times of goals scored by us
    pub goal_times: Vec<f64>,
}

impl Referee {
    pub fn new(params: RefereeParams) -> Self {
        Self {
            params,
            phase: GamePhase::Initial,
            in_phase: 0.0,
            played: 0.0,
            score: [0, 0],
            penalized: false,
            kickoff: true,
            goal_times: Vec::new(),
        }
    }

    pub fn phase(&self) -> GamePhase {
        self.phase
    }

    pub fn score(&self) -> [u32; 2] {
        self.score
    }

    pub fn set_penalized(&mut self, penalized: bool) {
        self.penalized = penalized;
    }

    pub fn info(&self) -> GameInfo {
        GameInfo {
            phase: self.phase,
            score: self.score,
            remaining: (self.params.game_length - self.played).max(0.0),
            penalized: self.penalized,
            kickoff: self.kickoff,
        }
    }

    fn enter(&mut self, phase: GamePhase) -> RefereeEvent {
        self.phase = phase;
        self.in_phase = 0.0;
        RefereeEvent::PhaseChange(phase)
    }

    /// Advances the clocks and checks the ball against both goal mouths.
    pub fn step(&mut self, dt: f64, now: f64, ball: [f64; 2], field: &FieldSpec) -> RefereeEvent {
        self.in_phase += dt;
        let p = self.params;
        match self.phase {
            GamePhase::Initial if self.in_phase >= p.initial => self.enter(GamePhase::Ready),
            GamePhase::Ready if self.in_phase >= p.ready => self.enter(GamePhase::Set),
            GamePhase::Set if self.in_phase >= p.set => self.enter(GamePhase::Playing),
            GamePhase::Playing => {
                self.played += dt;
                if self.played >= p.game_length {
                    return self.enter(GamePhase::Finished);
                }
                match goal_side(ball, field) {
                    Some(ours) => {
                        self.score[if ours { 0 } else { 1 }] += 1;
                        if ours {
                            self.goal_times.push(now);
                        }
                        self.kickoff = !ours;
                        self.enter(GamePhase::Ready);
                        RefereeEvent::Goal(ours)
                    }
                    None => RefereeEvent::None,
                }
            }
            _ => RefereeEvent::None,
        }
    }
}

/// `Some(true)` when the ball center is past the opponent goal line between
/// the posts, `Some(false)` for our own goal.
pub fn goal_side(ball: [f64; 2], field: &FieldSpec) -> Option<bool> {
    if ball[1].abs() >= field.goal_width / 2.0 {
        return None;
    }
    if ball[0] > field.half_length() {
        Some(true)
    } else if ball[0] < -field.half_length() {
        Some(false)
    } else {
        None
    }
}
