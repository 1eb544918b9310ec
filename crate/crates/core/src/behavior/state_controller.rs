//! State controller: a finite state machine with a queue of planned states.

use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transition {
    Stay,
    /// leave the active state for the next queued one
    Advance,
    Jump(String),
    Terminate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControllerStatus {
    Running(String),
    Finished,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateControllerError {
    #[error("state `{0}` is not declared")]
    Undeclared(String),
    #[error("state queue is empty")]
    EmptyQueue,
    #[error("state `{0}` declared twice")]
    Duplicate(String),
}

/// One state. `C` is the context the states share.
pub trait State<C>: Send {
    fn enter(&mut self, _ctx: &mut C) {}
    fn step(&mut self, ctx: &mut C) -> Transition;
    fn exit(&mut self, _ctx: &mut C) {}
    /// controller ticks between two executions of `step`
    fn period(&self) -> u32 {
        1
    }
}

pub struct StateController<C> {
    states: BTreeMap<String, Box<dyn State<C>>>,
    queue: VecDeque<String>,
    active: Option<String>,
    finished: bool,
    ticks: u32,
}

impl<C> StateController<C> {
    pub fn new(states: Vec<(String, Box<dyn State<C>>)>, plan: &[&str]) -> Result<Self, StateControllerError> {
        let mut map = BTreeMap::new();
        for (name, s) in states {
            if map.insert(name.clone(), s).is_some() {
                return Err(StateControllerError::Duplicate(name));
            }
        }
        if plan.is_empty() {
            return Err(StateControllerError::EmptyQueue);
        }
        for p in plan {
            if !map.contains_key(*p) {
                return Err(StateControllerError::Undeclared(p.to_string()));
            }
        }
        Ok(Self {
            states: map,
            queue: plan.iter().map(|s| s.to_string()).collect(),
            active: None,
            finished: false,
            ticks: 0,
        })
    }

    pub fn active(&self) -> Option<&str> {
        self.active.as_deref()
    }

    pub fn queue(&self) -> impl Iterator<Item = &str> {
        self.queue.iter().map(|s| s.as_str())
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn push_back(&mut self, state: &str) -> Result<(), StateControllerError> {
        self.check(state)?;
        self.queue.push_back(state.to_string());
        Ok(())
    }

    pub fn push_front(&mut self, state: &str) -> Result<(), StateControllerError> {
        self.check(state)?;
        self.queue.push_front(state.to_string());
        Ok(())
    }

    pub fn clear_queue(&mut self) {
        self.queue.clear();
    }

    /// Replaces the plan and restarts a finished controller.
    pub fn replan(&mut self, plan: &[&str]) -> Result<(), StateControllerError> {
        for p in plan {
            self.check(p)?;
        }
        self.queue = plan.iter().map(|s| s.to_string()).collect();
        if self.finished && !self.queue.is_empty() {
            self.finished = false;
        }
        Ok(())
    }

    fn check(&self, state: &str) -> Result<(), StateControllerError> {
        if self.states.contains_key(state) {
            Ok(())
        } else {
            Err(StateControllerError::Undeclared(state.to_string()))
        }
    }

    fn enter(&mut self, name: String, ctx: &mut C) {
        self.states.get_mut(&name).expect("checked").enter(ctx);
        self.active = Some(name);
        self.ticks = 0;
    }

    fn exit_active(&mut self, ctx: &mut C) {
        if let Some(name) = self.active.take() {
            self.states.get_mut(&name).expect("checked").exit(ctx);
        }
    }

    /// One controller tick.
    pub fn step(&mut self, ctx: &mut C) -> Result<ControllerStatus, StateControllerError> {
        if self.finished {
            return Ok(ControllerStatus::Finished);
        }
        if self.active.is_none() {
            match self.queue.pop_front() {
                Some(next) => self.enter(next, ctx),
                None => {
                    self.finished = true;
                    return Ok(ControllerStatus::Finished);
                }
            }
        }
        let name = self.active.clone().expect("active state");
        let state = self.states.get_mut(&name).expect("checked");
        let period = state.period().max(1);
        let run = self.ticks % period == 0;
        self.ticks = self.ticks.wrapping_add(1);
        if !run {
            return Ok(ControllerStatus::Running(name));
        }
        match state.step(ctx) {
            Transition::Stay => {}
            Transition::Advance => {
                self.exit_active(ctx);
                match self.queue.pop_front() {
                    Some(next) => self.enter(next, ctx),
                    None => self.finished = true,
                }
            }
            Transition::Jump(target) => {
                self.check(&target)?;
                self.exit_active(ctx);
                self.enter(target, ctx);
            }
            Transition::Terminate => {
                self.exit_active(ctx);
                self.finished = true;
            }
        }
        Ok(match &self.active {
            Some(a) if !self.finished => ControllerStatus::Running(a.clone()),
            _ => ControllerStatus::Finished,
        })
    }
}
