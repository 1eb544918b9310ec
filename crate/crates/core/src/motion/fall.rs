//! Fall detection, relaxation and get-up triggering.
//!
//! Sign convention: the accelerometer measures specific force, so at rest
//! gravity in the body frame is `-accel`. Lying chest-down puts gravity
//! along +x of the trunk (prone); lying on the back puts it along -x (supine).

use super::{Blackboard, MotionContext, MotionError, MotionLibrary, MotionModule};
use crate::config::{ConfigServer, ParamHandle};
use crate::messages::FallState;

pub const GETUP_PRONE: &str = "getup_prone";
pub const GETUP_SUPINE: &str = "getup_supine";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FallParams {
    /// rad
    pub theta_fall: f64,
    pub n_confirm: u32,
    /// gyro magnitude below which the body counts as still, rad/s
    pub gyro_eps: f64,
    /// s of stillness before getting up
    pub t_settle: f64,
}

impl Default for FallParams {
    fn default() -> Self {
        Self {
            theta_fall: 60f64.to_radians(),
            n_confirm: 3,
            gyro_eps: 0.1,
            t_settle: 0.5,
        }
    }
}

/// Pure fall state machine.
#[derive(Debug, Clone, PartialEq)]
pub struct FallMonitor {
    pub params: FallParams,
    pub state: FallState,
    over: u32,
    still: f64,
}

impl FallMonitor {
    pub fn new(params: FallParams) -> Self {
        Self {
            params,
            state: FallState::Ok,
            over: 0,
            still: 0.0,
        }
    }

    fn tilted(&self, roll: f64, pitch: f64) -> bool {
        roll.abs().max(pitch.abs()) > self.params.theta_fall
    }

    /// One update. `getup_done` reports that the get-up motion finished this cycle.
    pub fn step(
        &mut self,
        roll: f64,
        pitch: f64,
        accel: [f64; 3],
        gyro: [f64; 3],
        dt: f64,
        getup_done: bool,
    ) -> FallState {
        let p = self.params;
        match self.state {
            FallState::Ok => {
                if self.tilted(roll, pitch) {
                    self.over += 1;
                    if self.over >= p.n_confirm {
                        self.enter_relaxed();
                    }
                } else {
                    self.over = 0;
                }
            }
            FallState::Relaxed => {
                let rate = (gyro[0] * gyro[0] + gyro[1] * gyro[1] + gyro[2] * gyro[2]).sqrt();
                if rate < p.gyro_eps {
                    self.still += dt;
                } else {
                    self.still = 0.0;
                }
                if self.still >= p.t_settle {
                    // body-frame gravity is -accel
                    let gravity_x = -accel[0];
                    self.state = if gravity_x > 0.0 {
                        FallState::GetupProne
                    } else {
                        FallState::GetupSupine
                    };
                }
            }
            FallState::GetupProne | FallState::GetupSupine => {
                if getup_done {
                    if self.tilted(roll, pitch) {
                        self.enter_relaxed();
                    } else {
                        self.state = FallState::Recovered;
                    }
                }
            }
            FallState::Recovered => {
                self.state = FallState::Ok;
                self.over = 0;
            }
        }
        self.state
    }

    fn enter_relaxed(&mut self) {
        self.state = FallState::Relaxed;
        self.over = 0;
        self.still = 0.0;
    }

    /// Returns to RELAXED when a get-up cannot be started.
    pub fn abort_getup(&mut self) {
        self.enter_relaxed();
    }
}

pub struct FallProtection {
    monitor: FallMonitor,
    theta: ParamHandle,
    n_confirm: ParamHandle,
    available: [bool; 2],
    active_motion: Option<&'static str>,
}

impl FallProtection {
    pub fn new(config: &ConfigServer, library: &MotionLibrary) -> Result<Self, MotionError> {
        let d = FallParams::default();
        Ok(Self {
            monitor: FallMonitor::new(d),
            theta: config.float("/fall/theta_fall_deg", d.theta_fall.to_degrees(), 10.0, 90.0)?,
            n_confirm: config.declare("/fall/n_confirm", d.n_confirm as i64, None)?,
            available: [library.get(GETUP_PRONE).is_some(), library.get(GETUP_SUPINE).is_some()],
            active_motion: None,
        })
    }

    pub fn state(&self) -> FallState {
        self.monitor.state
    }
}

impl MotionModule for FallProtection {
    fn name(&self) -> &str {
        "fall_protection"
    }

    fn step(&mut self, ctx: &MotionContext, bb: &mut Blackboard) -> Result<(), String> {
        self.monitor.params.theta_fall = self.theta.f64().to_radians();
        self.monitor.params.n_confirm = self.n_confirm.i64().max(1) as u32;
        let done = match (self.active_motion, &bb.finished) {
            (Some(m), Some(f)) => m == f,
            _ => false,
        };
        let before = self.monitor.state;
        let imu = &ctx.feedback.imu;
        let state = self
            .monitor
            .step(ctx.attitude.roll, ctx.attitude.pitch, imu.accel, imu.gyro, ctx.dt, done);
        if state != before && matches!(state, FallState::GetupProne | FallState::GetupSupine) {
            let (name, ok) = if state == FallState::GetupProne {
                (GETUP_PRONE, self.available[0])
            } else {
                (GETUP_SUPINE, self.available[1])
            };
            if ok {
                bb.forced_request = Some(name.to_string());
                self.active_motion = Some(name);
            } else {
                self.monitor.abort_getup();
                bb.errors
                    .push(format!("fall protection: get-up motion `{name}` is not loaded"));
            }
        }
        if !matches!(self.monitor.state, FallState::GetupProne | FallState::GetupSupine) {
            self.active_motion = None;
        }
        bb.fall_state = self.monitor.state;
        match self.monitor.state {
            FallState::Relaxed => {
                bb.relax = true;
                bb.suppress_gait = true;
            }
            FallState::GetupProne | FallState::GetupSupine => bb.suppress_gait = true,
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UP: [f64; 3] = [0.0, 0.0, 9.81];

    fn run(monitor: &mut FallMonitor, pitches: &[f64]) -> Vec<FallState> {
        pitches
            .iter()
            .map(|&p| monitor.step(0.0, p.to_radians(), UP, [0.0; 3], 0.008, false))
            .collect()
    }

    #[test]
    fn threshold_and_confirmation() {
        let mut m = FallMonitor::new(FallParams::default());
        assert_eq!(run(&mut m, &[70.0, 70.0, 70.0]).last(), Some(&FallState::Relaxed));
        let mut m = FallMonitor::new(FallParams::default());
        assert_eq!(run(&mut m, &[70.0, 0.0, 70.0, 70.0]).last(), Some(&FallState::Ok));
    }

    #[test]
    fn settled_prone_selects_prone_getup() {
        let mut m = FallMonitor::new(FallParams::default());
        run(&mut m, &[80.0; 3]);
        // chest down: gravity along +x body, accelerometer reads -x
        let mut state = m.state;
        for _ in 0..70 {
            state = m.step(0.0, 1.5, [-9.81, 0.0, 0.0], [0.0; 3], 0.008, false);
        }
        assert_eq!(state, FallState::GetupProne);
        assert_eq!(m.step(0.0, 0.0, UP, [0.0; 3], 0.008, true), FallState::Recovered);
        assert_eq!(m.step(0.0, 0.0, UP, [0.0; 3], 0.008, false), FallState::Ok);
    }

    #[test]
    fn relaxed_only_after_consecutive_overs() {
        // exhaustive over/under traces up to length 10
        let n = FallParams::default().n_confirm as usize;
        for len in 1..=10 {
            for bits in 0u32..(1 << len) {
                let trace: Vec<bool> = (0..len).map(|i| bits >> i & 1 == 1).collect();
                let mut m = FallMonitor::new(FallParams::default());
                let mut run_len = 0;
                let mut expected_at = None;
                for (i, &over) in trace.iter().enumerate() {
                    run_len = if over { run_len + 1 } else { 0 };
                    if run_len == n && expected_at.is_none() {
                        expected_at = Some(i);
                    }
                    let s = m.step(0.0, if over { 1.2 } else { 0.0 }, UP, [1.0; 3], 0.008, false);
                    let should = expected_at.is_some_and(|k| k <= i);
                    assert_eq!(s == FallState::Relaxed, should, "trace {trace:?} step {i}");
                }
            }
        }
    }
}
