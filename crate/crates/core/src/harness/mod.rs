//! Experiment runner and emulator calibration.
//!
//! An [`ExperimentSpec`] describes one of four runs (step, sine,
//! trajectory, override). [`run_embedded`] executes it against an
//! in-process emulator on a virtual clock, [`run_socket`] against a
//! controller over TCP; both return the log and its analysis.
//! [`calibrate`] sweeps servo parameters to match reference measurements.

pub mod assets;
mod calibrate;
mod experiment;

use thiserror::Error;

pub use self::calibrate::{
    calibrate, evaluate, CalibrationGrid, CalibrationParams, CalibrationResult, CalibrationTargets,
    Evaluation, Residual, SineTarget, StepTarget,
};
pub use self::experiment::{
    analysis_options, run_embedded, run_experiment, run_socket, Experiment, ExperimentSpec, RunOutput,
    APPROACH_TIMEOUT, APPROACH_TOLERANCE, DEFAULT_SINE_DURATION, DEFAULT_STEP_DURATION,
};

use crate::emulator::ConfigError;
use crate::metrics::MetricsError;
use crate::pose::PoseError;
use crate::stream::StreamError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("analysis failed: {0}")]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error("calibration grid is empty")]
    EmptyGrid,
    #[error("no grid point gives a settled step response without overshoot")]
    NoFeasiblePoint,
}
