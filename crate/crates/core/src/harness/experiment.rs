use std::f64::consts::PI;
use std::net::ToSocketAddrs;
use std::time::Duration;

use crate::emulator::{Emulator, EmulatorConfig};
use crate::metrics::{analyze_log, AnalysisOptions, AnalysisReport};
use crate::pose::NUM_JOINTS;
use crate::regproto::ClientError;
use crate::stream::{
    ControllerSession, EmbeddedSession, ExperimentLog, OverrideSchedule, StreamClient, StreamConfig,
    StreamError, TcpSession, Trajectory, DEFAULT_STREAM_RATE,
};

use super::HarnessError;

pub const DEFAULT_STEP_DURATION: f64 = 5.0;
pub const DEFAULT_SINE_DURATION: f64 = 30.0;

/// Tolerance of the approach move that brings the arm to a trajectory's
/// first waypoint, deg.
pub const APPROACH_TOLERANCE: f64 = 0.01;
/// Upper bound on the approach move, s.
pub const APPROACH_TIMEOUT: f64 = 30.0;

/// One of the four experiment types. Joints are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    /// Hold `setpoint` (absolute, deg) on one joint.
    Step {
        joint: usize,
        setpoint: f64,
        duration: f64,
    },
    /// `start + amplitude * sin(2 pi frequency t)` on one joint.
    Sine {
        joint: usize,
        amplitude: f64,
        frequency: f64,
        duration: f64,
    },
    Trajectory {
        trajectory: Trajectory,
    },
    Override {
        trajectory: Trajectory,
        schedule: OverrideSchedule,
    },
}

impl Experiment {
    pub fn step(joint: usize, setpoint: f64) -> Self {
        Experiment::Step {
            joint,
            setpoint,
            duration: DEFAULT_STEP_DURATION,
        }
    }

    pub fn sine(joint: usize, amplitude: f64, frequency: f64) -> Self {
        Experiment::Sine {
            joint,
            amplitude,
            frequency,
            duration: DEFAULT_SINE_DURATION,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Step { .. } => "step",
            Experiment::Sine { .. } => "sine",
            Experiment::Trajectory { .. } => "trajectory",
            Experiment::Override { .. } => "override",
        }
    }

    /// The joint the metrics refer to; `None` lets the analysis pick it.
    pub fn joint(&self) -> Option<usize> {
        match self {
            Experiment::Step { joint, .. } | Experiment::Sine { joint, .. } => Some(*joint),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub stream_rate: f64,
    /// Move to the first waypoint before executing a trajectory.
    pub approach: bool,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            stream_rate: DEFAULT_STREAM_RATE,
            approach: true,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Spec(msg));
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(HarnessError::Spec(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("stream rate", self.stream_rate)?;
        if let Some(j) = self.experiment.joint() {
            if !(1..=NUM_JOINTS).contains(&j) {
                return bad(format!("joint must be in 1..={NUM_JOINTS}, got {j}"));
            }
        }
        match &self.experiment {
            Experiment::Step { setpoint, duration, .. } => {
                if !setpoint.is_finite() {
                    return bad(format!("setpoint must be finite, got {setpoint}"));
                }
                positive("duration", *duration)
            }
            Experiment::Sine {
                amplitude,
                frequency,
                duration,
                ..
            } => {
                positive("amplitude", *amplitude)?;
                positive("frequency", *frequency)?;
                positive("duration", *duration)
            }
            Experiment::Trajectory { .. } | Experiment::Override { .. } => Ok(()),
        }
    }
}

/// Log and analysis of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub log: ExperimentLog,
    pub report: AnalysisReport,
}

/// Analysis options used for the run-time report of `spec`.
pub fn analysis_options(spec: &ExperimentSpec) -> AnalysisOptions {
    AnalysisOptions {
        joint: spec.experiment.joint(),
        ..AnalysisOptions::default()
    }
}

/// Runs `spec` over an already connected session: handshake, optional
/// approach move, the experiment itself, then analysis of its log.
pub fn run_experiment<S: ControllerSession>(
    session: S,
    spec: &ExperimentSpec,
) -> Result<RunOutput, HarnessError> {
    spec.validate()?;
    let mut client = StreamClient::new(
        session,
        StreamConfig {
            stream_rate: spec.stream_rate,
            ..StreamConfig::default()
        },
    )?;
    let start = client.handshake()?;
    let log = match &spec.experiment {
        Experiment::Step {
            joint,
            setpoint,
            duration,
        } => client.stream_setpoint(start.with_joint(joint - 1, *setpoint)?, *duration)?,
        Experiment::Sine {
            joint,
            amplitude,
            frequency,
            duration,
        } => {
            let j = joint - 1;
            let base = start[j];
            client.stream_function(*duration, |t| {
                let value = base + amplitude * (2.0 * PI * frequency * t).sin();
                start.with_joint(j, value).expect("validated amplitude is finite")
            })?
        }
        Experiment::Trajectory { trajectory } => {
            approach(&mut client, trajectory, spec.approach)?;
            client.execute_trajectory(trajectory, None)?
        }
        Experiment::Override {
            trajectory,
            schedule,
        } => {
            approach(&mut client, trajectory, spec.approach)?;
            client.execute_trajectory(trajectory, Some(schedule))?
        }
    };
    let report = analyze_log(&log, &analysis_options(spec))?;
    Ok(RunOutput { log, report })
}

fn approach<S: ControllerSession>(
    client: &mut StreamClient<S>,
    trajectory: &Trajectory,
    enabled: bool,
) -> Result<(), StreamError> {
    if enabled {
        let current = client.session_mut().read_state().map_err(|source| StreamError::Aborted {
            log: ExperimentLog::new(),
            source,
        })?;
        if current.q.max_abs_diff(&trajectory.start()) > APPROACH_TOLERANCE {
            log::info!("approaching trajectory start {}", trajectory.start());
            client.move_to(trajectory.start(), APPROACH_TOLERANCE, APPROACH_TIMEOUT)?;
        }
    }
    Ok(())
}

/// Runs `spec` against an in-process emulator on a virtual clock. The
/// result depends only on `config` and `spec`.
pub fn run_embedded(config: &EmulatorConfig, spec: &ExperimentSpec) -> Result<RunOutput, HarnessError> {
    let emulator = Emulator::new(config.clone())?;
    run_experiment(EmbeddedSession::new(emulator), spec)
}

/// Runs `spec` against a controller reachable over TCP.
pub fn run_socket<A: ToSocketAddrs>(
    endpoint: A,
    timeout: Duration,
    spec: &ExperimentSpec,
) -> Result<RunOutput, HarnessError> {
    let session = TcpSession::connect(endpoint, timeout)
        .map_err(|e: ClientError| HarnessError::Stream(StreamError::Handshake(e)))?;
    run_experiment(session, spec)
}
