//! Client-side streaming interface.
//!
//! [`StreamClient`] performs the start-up handshake with the motion program
//! (publish the current pose to PR[1], then raise R[1]) and afterwards runs
//! a fixed-rate loop: read state, compute a joint target, write it to PR[1].
//! Trajectories are executed on a scaled clock whose rate is the live speed
//! override. Commands are never clamped on this side; any velocity limiting
//! happens in the controller and shows up only in feedback.

mod log;
mod session;
mod trajectory;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

pub use self::log::{csv_header, ExperimentLog, LogError, LogRow};
pub use self::session::{ControllerSession, EmbeddedSession, TcpSession};
pub use self::trajectory::{
    sample_trajectory, valid_override, OverrideEntry, OverrideSchedule, Trajectory,
    TrajectoryError, Waypoint,
};

use crate::pose::{JointPose, JointState};
use crate::regproto::{ClientError, PR_TARGET, R_MOTION_ENABLE};

pub const DEFAULT_STREAM_RATE: f64 = 25.0;
/// Largest allowed gap between feedback and a trajectory's first waypoint, deg.
pub const START_TOLERANCE: f64 = 0.5;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("handshake failed: {0}")]
    Handshake(#[source] ClientError),
    #[error("handshake has not completed")]
    NotReady,
    #[error("trajectory starts {deviation:.3} deg from the current pose (limit {limit} deg)")]
    StartMismatch { deviation: f64, limit: f64 },
    #[error("stream aborted after {} cycles: {source}", log.len())]
    Aborted {
        log: ExperimentLog,
        #[source]
        source: ClientError,
    },
    #[error("override {0} outside (0, 1]")]
    InvalidOverride(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl StreamError {
    /// The partial log of an aborted run.
    pub fn partial_log(&self) -> Option<&ExperimentLog> {
        match self {
            StreamError::Aborted { log, .. } => Some(log),
            _ => None,
        }
    }
}

/// Shared speed override. Cloned handles may be set from other threads;
/// the control loop reads it once per cycle.
#[derive(Debug, Clone)]
pub struct OverrideHandle(Arc<AtomicU64>);

impl Default for OverrideHandle {
    fn default() -> Self {
        Self(Arc::new(AtomicU64::new(1.0f64.to_bits())))
    }
}

impl OverrideHandle {
    pub fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::SeqCst))
    }

    /// Rejects values outside (0, 1] and keeps the previous value.
    pub fn set(&self, value: f64) -> Result<(), StreamError> {
        if !valid_override(value) {
            return Err(StreamError::InvalidOverride(value));
        }
        self.0.store(value.to_bits(), Ordering::SeqCst);
        Ok(())
    }
}

/// Trajectory time advanced at `override * dt` per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScaledClock {
    pub s: f64,
    pub last_update: f64,
}

impl ScaledClock {
    pub fn advance(&mut self, ovr: f64, dt: f64) {
        self.s += ovr * dt;
        self.last_update += dt;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamConfig {
    /// Command rate, Hz.
    pub stream_rate: f64,
    pub start_tolerance: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            stream_rate: DEFAULT_STREAM_RATE,
            start_tolerance: START_TOLERANCE,
        }
    }
}

pub struct StreamClient<S> {
    session: S,
    config: StreamConfig,
    override_handle: OverrideHandle,
    ready: bool,
}

impl<S: ControllerSession> StreamClient<S> {
    pub fn new(session: S, config: StreamConfig) -> Result<Self, StreamError> {
        if !(config.stream_rate.is_finite() && config.stream_rate > 0.0) {
            return Err(StreamError::InvalidArgument(format!(
                "stream rate must be > 0, got {}",
                config.stream_rate
            )));
        }
        Ok(Self {
            session,
            config,
            override_handle: OverrideHandle::default(),
            ready: false,
        })
    }

    pub fn session(&self) -> &S {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut S {
        &mut self.session
    }

    pub fn into_session(self) -> S {
        self.session
    }

    pub fn period(&self) -> f64 {
        1.0 / self.config.stream_rate
    }

    pub fn is_ready(&self) -> bool {
        self.ready
    }

    /// Initialises PR[1] with the current pose and then enables motion.
    /// Nothing is written if the state read fails, and R[1] stays 0 if the
    /// PR write fails.
    pub fn handshake(&mut self) -> Result<JointPose, StreamError> {
        let state = self.session.read_state().map_err(StreamError::Handshake)?;
        self.session
            .write_pr(PR_TARGET, &state.q)
            .map_err(StreamError::Handshake)?;
        self.session
            .write_r(R_MOTION_ENABLE, 1)
            .map_err(StreamError::Handshake)?;
        self.ready = true;
        Ok(state.q)
    }

    pub fn override_handle(&self) -> OverrideHandle {
        self.override_handle.clone()
    }

    /// Takes effect at the next control cycle.
    pub fn set_override(&self, value: f64) -> Result<(), StreamError> {
        self.override_handle.set(value)
    }

    fn cycles_for(&self, duration: f64) -> Result<u64, StreamError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(StreamError::InvalidArgument(format!(
                "duration must be > 0, got {duration}"
            )));
        }
        Ok((duration * self.config.stream_rate - TIME_EPS).ceil() as u64)
    }

    /// Runs one control cycle: wait for the deadline, sample feedback,
    /// write the command and log the row.
    fn cycle(
        &mut self,
        t0: f64,
        k: u64,
        ovr: f64,
        log: &mut ExperimentLog,
        command: impl FnOnce(f64, &JointState) -> JointPose,
    ) -> Result<(), ClientError> {
        let nominal = k as f64 * self.period();
        self.session.wait_until(t0 + nominal)?;
        let t = self.session.now() - t0;
        let fb = self.session.read_state()?;
        let cmd = command(nominal, &fb);
        self.session.write_pr(PR_TARGET, &cmd)?;
        let t_cmd = self.session.now() - t0;
        log.push(LogRow {
            t,
            t_cmd,
            cmd,
            fb: fb.q,
            vel: fb.qd,
            ovr,
        });
        Ok(())
    }

    /// Streams `reference(t)` for `duration` seconds, `t` being the nominal
    /// cycle time from the start of the run.
    pub fn stream_function(
        &mut self,
        duration: f64,
        mut reference: impl FnMut(f64) -> JointPose,
    ) -> Result<ExperimentLog, StreamError> {
        if !self.ready {
            return Err(StreamError::NotReady);
        }
        let cycles = self.cycles_for(duration)?;
        let t0 = self.session.now();
        let mut log = ExperimentLog::new();
        for k in 0..cycles {
            if let Err(source) = self.cycle(t0, k, 1.0, &mut log, |t, _| reference(t)) {
                return Err(StreamError::Aborted { log, source });
            }
        }
        Ok(log)
    }

    /// Holds `target` in PR[1] for `duration` seconds.
    pub fn stream_setpoint(
        &mut self,
        target: JointPose,
        duration: f64,
    ) -> Result<ExperimentLog, StreamError> {
        self.stream_function(duration, |_| target)
    }

    /// Streams `target` until feedback is within `tolerance` deg and at
    /// rest, or `max_duration` elapses.
    pub fn move_to(
        &mut self,
        target: JointPose,
        tolerance: f64,
        max_duration: f64,
    ) -> Result<ExperimentLog, StreamError> {
        if !self.ready {
            return Err(StreamError::NotReady);
        }
        let cycles = self.cycles_for(max_duration)?;
        let t0 = self.session.now();
        let mut log = ExperimentLog::new();
        for k in 0..cycles {
            if let Err(source) = self.cycle(t0, k, 1.0, &mut log, |_, _| target) {
                return Err(StreamError::Aborted { log, source });
            }
            let last = log.rows.last().expect("row just pushed");
            let at_rest = last.vel.iter().all(|v| v.abs() < 1e-6);
            if last.fb.max_abs_diff(&target) <= tolerance && at_rest {
                break;
            }
        }
        Ok(log)
    }

    /// Executes `traj` on a scaled clock. Each cycle commands the pose at
    /// scaled time `s`, then advances `s` by `override * period`. The
    /// override comes from `schedule` (entries switch in at their wall
    /// time) or from [`StreamClient::set_override`]. Finishes with the
    /// cycle that commands the final waypoint.
    pub fn execute_trajectory(
        &mut self,
        traj: &Trajectory,
        schedule: Option<&OverrideSchedule>,
    ) -> Result<ExperimentLog, StreamError> {
        if !self.ready {
            return Err(StreamError::NotReady);
        }
        let current = self
            .session
            .read_state()
            .map_err(|source| StreamError::Aborted {
                log: ExperimentLog::new(),
                source,
            })?;
        let deviation = current.q.max_abs_diff(&traj.start());
        if deviation > self.config.start_tolerance {
            return Err(StreamError::StartMismatch {
                deviation,
                limit: self.config.start_tolerance,
            });
        }

        let period = self.period();
        let t_end = traj.duration();
        let t0 = self.session.now();
        let mut clock = ScaledClock::default();
        let mut log = ExperimentLog::new();
        let mut active_entry = None;
        let mut k = 0u64;
        loop {
            if let Some(schedule) = schedule {
                let nominal = k as f64 * period;
                let idx = schedule.entries().partition_point(|e| e.t <= nominal) - 1;
                if active_entry != Some(idx) {
                    active_entry = Some(idx);
                    self.override_handle.set(schedule.entries()[idx].ovr)?;
                }
            }
            let ovr = self.override_handle.get();
            let s = clock.s;
            if let Err(source) = self.cycle(t0, k, ovr, &mut log, |_, _| sample_trajectory(traj, s)) {
                return Err(StreamError::Aborted { log, source });
            }
            if s >= t_end - TIME_EPS {
                break;
            }
            clock.advance(ovr, period);
            k += 1;
        }
        Ok(log)
    }
}
