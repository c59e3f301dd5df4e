//! Controller emulation.
//!
//! The motion program mirrors a minimal teach-pendant loop: on start it
//! clears R[1] and waits; once the client sets R[1]=1 it keeps servoing
//! toward whatever pose sits in PR[1]. R[2] drives a gripper whose state is
//! reported on DI[1].
//!
//! The servo is a per-joint proportional velocity command, clamped to the
//! joint velocity limit and slew-limited by the acceleration limit.

mod config;
mod latency;
mod realtime;

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::{
    ClockMode, ConfigError, EmulatorConfig, PerJoint, DEFAULT_AMAX, DEFAULT_COMMAND_LATENCY,
    DEFAULT_KP, DEFAULT_VMAX,
};
pub use latency::LatencyQueue;
pub use realtime::{run, EmulatorError, EmulatorHandle, RealtimeEmulator};

use crate::pose::{JointPose, JointState, NUM_JOINTS};
use crate::regproto::{
    LoopbackLink, RegisterFile, SharedRegisters, StateMailbox, DI_GRIPPER_CLOSED, PR_TARGET,
    R_GRIPPER, R_MOTION_ENABLE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TpPhase {
    Init,
    Wait,
    Track,
}

impl fmt::Display for TpPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TpPhase::Init => "INIT",
            TpPhase::Wait => "WAIT",
            TpPhase::Track => "TRACK",
        })
    }
}

/// One servo update for a single joint. Returns the new `(q, v)`.
pub fn servo_step(q: f64, v: f64, target: f64, kp: f64, vmax: f64, amax: f64, dt: f64) -> (f64, f64) {
    let v_des = (kp * (target - q)).clamp(-vmax, vmax);
    let dv_max = amax * dt;
    let v = v + (v_des - v).clamp(-dv_max, dv_max);
    (q + v * dt, v)
}

/// Acceleration-limited braking toward zero velocity.
fn brake_step(q: f64, v: f64, amax: f64, dt: f64) -> (f64, f64) {
    let dv_max = amax * dt;
    let v = v - v.clamp(-dv_max, dv_max);
    (q + v * dt, v)
}

/// Virtual-clock controller. Time advances only through [`Emulator::tick`].
pub struct Emulator {
    config: EmulatorConfig,
    registers: SharedRegisters,
    mailbox: StateMailbox,
    phase: TpPhase,
    ticks: u64,
    q: [f64; NUM_JOINTS],
    qd: [f64; NUM_JOINTS],
    target: [f64; NUM_JOINTS],
    target_queue: LatencyQueue<JointPose>,
    gripper_queue: LatencyQueue<i32>,
    feedback_queue: LatencyQueue<JointState>,
    trace: Option<Vec<TraceRow>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub state: JointState,
    pub phase: TpPhase,
}

impl Emulator {
    pub fn new(config: EmulatorConfig) -> Result<Self, ConfigError> {
        Self::with_registers(config, SharedRegisters::default())
    }

    pub fn with_registers(
        config: EmulatorConfig,
        registers: SharedRegisters,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        let home = config.home_pose;
        let mut emu = Self {
            target_queue: LatencyQueue::new(config.command_latency),
            gripper_queue: LatencyQueue::new(config.command_latency),
            feedback_queue: LatencyQueue::new(config.feedback_latency),
            config,
            registers,
            mailbox: StateMailbox::new(JointState::at_rest(0.0, home)),
            phase: TpPhase::Init,
            ticks: 0,
            q: *home.angles(),
            qd: [0.0; NUM_JOINTS],
            target: *home.angles(),
            trace: None,
        };
        emu.tp_reset();
        Ok(emu)
    }

    pub fn config(&self) -> &EmulatorConfig {
        &self.config
    }

    pub fn registers(&self) -> &SharedRegisters {
        &self.registers
    }

    pub fn mailbox(&self) -> &StateMailbox {
        &self.mailbox
    }

    /// In-process protocol link to this emulator's registers and feedback.
    pub fn loopback(&self) -> LoopbackLink<StateMailbox> {
        LoopbackLink::new(self.registers.clone(), self.mailbox.clone())
    }

    pub fn phase(&self) -> TpPhase {
        self.phase
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn time(&self) -> f64 {
        self.ticks as f64 / self.config.tick_rate
    }

    /// Undelayed arm state.
    pub fn state(&self) -> JointState {
        JointState {
            t: self.time(),
            q: JointPose::new(self.q).expect("servo keeps poses finite"),
            qd: self.qd,
        }
    }

    /// Starts recording the true state after every tick.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRow] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Program start: clear R[1], put the arm at rest at home with PR[1]
    /// holding the home pose, and wait for the client. Pending delayed
    /// values are dropped.
    pub fn tp_reset(&mut self) {
        let home = self.config.home_pose;
        {
            let mut regs = self.registers.lock();
            regs.set_r(R_MOTION_ENABLE, 0).expect("R[1] in range");
            regs.set_pr(PR_TARGET, home).expect("PR[1] in range");
        }
        self.q = *home.angles();
        self.qd = [0.0; NUM_JOINTS];
        self.target = self.q;
        self.target_queue.clear();
        self.gripper_queue.clear();
        self.feedback_queue.clear();
        self.mailbox.publish(JointState::at_rest(self.time(), home));
        self.phase = TpPhase::Wait;
    }

    /// Advances one tick of `1 / tick_rate` seconds and returns the true
    /// state at the end of it.
    pub fn tick(&mut self) -> JointState {
        let now = self.time();
        let dt = self.config.tick_period();
        let (enable, target, gripper) = {
            let regs = self.registers.lock();
            (
                regs.r(R_MOTION_ENABLE).expect("R[1] in range"),
                regs.pr(PR_TARGET).expect("PR[1] in range"),
                regs.r(R_GRIPPER).expect("R[2] in range"),
            )
        };

        match (self.phase, enable == 1) {
            (TpPhase::Wait, true) => {
                // hold the current pose until the first delayed target lands
                self.phase = TpPhase::Track;
                self.target = self.q;
                self.target_queue.clear();
            }
            (TpPhase::Track, false) => self.phase = TpPhase::Wait,
            _ => {}
        }

        if self.phase == TpPhase::Track {
            self.target_queue.push(now, target);
            if let Some(t) = self.target_queue.pop_visible(now) {
                self.target = *t.angles();
            }
        }
        self.gripper_logic(now, gripper);

        let cfg = &self.config;
        for j in 0..NUM_JOINTS {
            let (q, v) = match self.phase {
                TpPhase::Track => servo_step(
                    self.q[j],
                    self.qd[j],
                    self.target[j],
                    cfg.kp.get(j),
                    cfg.vmax.get(j),
                    cfg.amax.get(j),
                    dt,
                ),
                _ => brake_step(self.q[j], self.qd[j], cfg.amax.get(j), dt),
            };
            self.q[j] = q;
            self.qd[j] = v;
        }

        self.ticks += 1;
        let state = self.state();
        self.feedback_queue.push(state.t, state);
        if let Some(visible) = self.feedback_queue.pop_visible(state.t) {
            self.mailbox.publish(visible);
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRow {
                state,
                phase: self.phase,
            });
        }
        state
    }

    /// R[2] = 1 closes the gripper (DI[1] = true), anything else opens it.
    /// Commands take effect after the command latency.
    fn gripper_logic(&mut self, now: f64, r2: i32) {
        self.gripper_queue.push(now, r2);
        if let Some(cmd) = self.gripper_queue.pop_visible(now) {
            self.registers
                .lock()
                .set_di(DI_GRIPPER_CLOSED, cmd == 1)
                .expect("DI[1] in range");
        }
    }

    /// Runs `n` ticks; simulation time advances by exactly `n / tick_rate`.
    pub fn step(&mut self, n: u64) -> JointState {
        for _ in 0..n {
            self.tick();
        }
        self.state()
    }

    /// Ticks until simulation time reaches `t` (no-op if already past).
    pub fn advance_to(&mut self, t: f64) -> JointState {
        let target_ticks = (t * self.config.tick_rate - 1e-9).ceil().max(0.0) as u64;
        while self.ticks < target_ticks {
            self.tick();
        }
        self.state()
    }

    pub fn register_snapshot(&self) -> RegisterFile {
        self.registers.snapshot()
    }

    pub fn state_provider(&self) -> Arc<StateMailbox> {
        Arc::new(self.mailbox.clone())
    }
}

/// Writes a state trace as `t,q1..q6,qd1..qd6,phase`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=NUM_JOINTS).map(|j| format!("q{j}")));
    header.extend((1..=NUM_JOINTS).map(|j| format!("qd{j}")));
    header.push("phase".into());
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.state.t.to_string()];
        rec.extend(row.state.q.angles().iter().map(|v| v.to_string()));
        rec.extend(row.state.qd.iter().map(|v| v.to_string()));
        rec.push(row.phase.to_string());
        w.write_record(&rec)?;
    }
    w.flush()
}
