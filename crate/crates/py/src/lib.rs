//! Python module `crx_stream`: the wire codec, the emulator, a blocking
//! register client, embedded experiment runs, offline metrics and the
//! calibration sweep.

use std::fmt::Display;
use std::time::Duration;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use crx_core::emulator::{self, EmulatorConfig as CoreConfig};
use crx_core::harness::{self, Experiment, ExperimentSpec, RunOutput};
use crx_core::metrics::{self, AnalysisOptions};
use crx_core::regproto::{self, Decoded, Frame, LoopbackLink, Opcode, RegisterClient, RegisterLink, StateMailbox};
use crx_core::stream::{ExperimentLog, OverrideSchedule, Trajectory};
use crx_core::{JointPose, JointState};

create_exception!(crx_stream, CrxError, PyException);
create_exception!(crx_stream, ProtocolError, CrxError);

fn crx_err<E: Display>(e: E) -> PyErr {
    CrxError::new_err(e.to_string())
}

fn protocol_err<E: Display>(e: E) -> PyErr {
    ProtocolError::new_err(e.to_string())
}

fn pose(values: Vec<f64>) -> PyResult<JointPose> {
    JointPose::from_slice(&values).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn opcode(byte: u8) -> PyResult<Opcode> {
    Opcode::from_u8(byte).ok_or_else(|| PyValueError::new_err(format!("unknown opcode {byte:#04x}")))
}

/// Encodes a request frame.
#[pyfunction]
fn encode_frame<'py>(py: Python<'py>, op: u8, index: u16, payload: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
    let frame = Frame::new(opcode(op)?, index, payload.to_vec());
    let bytes = regproto::encode_frame(&frame).map_err(protocol_err)?;
    Ok(PyBytes::new(py, &bytes))
}

/// Decodes one request frame from the front of `data`.
///
/// Returns `(opcode, index, payload, consumed)`, or `None` when more bytes
/// are needed.
#[pyfunction]
fn decode_frame<'py>(
    py: Python<'py>,
    data: &[u8],
) -> PyResult<Option<(u8, u16, Bound<'py, PyBytes>, usize)>> {
    match regproto::decode_frame(data).map_err(protocol_err)? {
        Decoded::Complete(frame, used) => Ok(Some((
            frame.opcode as u8,
            frame.index,
            PyBytes::new(py, &frame.payload),
            used,
        ))),
        Decoded::NeedMore => Ok(None),
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, name = "JointState")]
#[derive(Clone)]
struct PyJointState {
    t: f64,
    q: Vec<f64>,
    qd: Vec<f64>,
}

impl From<JointState> for PyJointState {
    fn from(s: JointState) -> Self {
        Self {
            t: s.t,
            q: s.q.angles().to_vec(),
            qd: s.qd.to_vec(),
        }
    }
}

#[pymethods]
impl PyJointState {
    fn __repr__(&self) -> String {
        format!("JointState(t={}, q={:?}, qd={:?})", self.t, self.q, self.qd)
    }
}

/// Emulator parameters. Servo values are reported for the first joint.
#[pyclass(skip_from_py_object, name = "EmulatorConfig")]
#[derive(Clone)]
struct PyConfig(CoreConfig);

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self(CoreConfig::default())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CoreConfig::from_json(text).map(Self).map_err(crx_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        CoreConfig::load(path).map(Self).map_err(crx_err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn kp(&self) -> f64 {
        self.0.kp.get(0)
    }

    #[getter]
    fn vmax(&self) -> f64 {
        self.0.vmax.get(0)
    }

    #[getter]
    fn amax(&self) -> f64 {
        self.0.amax.get(0)
    }

    #[getter]
    fn command_latency(&self) -> f64 {
        self.0.command_latency
    }

    #[getter]
    fn tick_rate(&self) -> f64 {
        self.0.tick_rate
    }
}

fn config_or_default(config: Option<PyRef<'_, PyConfig>>) -> CoreConfig {
    config.map(|c| c.0.clone()).unwrap_or_default()
}

/// Virtual-clock emulator with register access.
#[pyclass(name = "Emulator")]
struct PyEmulator {
    emu: emulator::Emulator,
    link: LoopbackLink<StateMailbox>,
}

#[pymethods]
impl PyEmulator {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<PyRef<'_, PyConfig>>) -> PyResult<Self> {
        let emu = emulator::Emulator::new(config_or_default(config)).map_err(crx_err)?;
        let link = emu.loopback();
        Ok(Self { emu, link })
    }

    fn tick(&mut self) -> PyJointState {
        self.emu.tick().into()
    }

    fn step(&mut self, n: u64) -> PyJointState {
        self.emu.step(n).into()
    }

    #[getter]
    fn time(&self) -> f64 {
        self.emu.time()
    }

    #[getter]
    fn phase(&self) -> String {
        format!("{:?}", self.emu.phase()).to_uppercase()
    }

    fn state(&self) -> PyJointState {
        self.emu.state().into()
    }

    fn read_r(&mut self, index: u16) -> PyResult<i32> {
        self.link.read_r(index).map_err(protocol_err)
    }

    fn write_r(&mut self, index: u16, value: i32) -> PyResult<()> {
        self.link.write_r(index, value).map_err(protocol_err)
    }

    fn read_pr(&mut self, index: u16) -> PyResult<Vec<f64>> {
        Ok(self.link.read_pr(index).map_err(protocol_err)?.angles().to_vec())
    }

    fn write_pr(&mut self, index: u16, q: Vec<f64>) -> PyResult<()> {
        self.link.write_pr(index, &pose(q)?).map_err(protocol_err)
    }

    fn read_di(&mut self, index: u16) -> PyResult<bool> {
        self.link.read_di(index).map_err(protocol_err)
    }
}

/// Blocking TCP client for a register server.
#[pyclass(name = "Client")]
struct PyClient(RegisterClient);

#[pymethods]
impl PyClient {
    #[new]
    #[pyo3(signature = (endpoint, timeout=1.0))]
    fn new(endpoint: &str, timeout: f64) -> PyResult<Self> {
        let timeout = Duration::try_from_secs_f64(timeout).map_err(|e| PyValueError::new_err(e.to_string()))?;
        RegisterClient::connect(endpoint, timeout).map(Self).map_err(protocol_err)
    }

    fn read_r(&mut self, index: u16) -> PyResult<i32> {
        self.0.read_r(index).map_err(protocol_err)
    }

    fn write_r(&mut self, index: u16, value: i32) -> PyResult<()> {
        self.0.write_r(index, value).map_err(protocol_err)
    }

    fn read_pr(&mut self, index: u16) -> PyResult<Vec<f64>> {
        Ok(self.0.read_pr(index).map_err(protocol_err)?.angles().to_vec())
    }

    fn write_pr(&mut self, index: u16, q: Vec<f64>) -> PyResult<()> {
        self.0.write_pr(index, &pose(q)?).map_err(protocol_err)
    }

    fn read_di(&mut self, index: u16) -> PyResult<bool> {
        self.0.read_di(index).map_err(protocol_err)
    }

    fn write_di(&mut self, index: u16, value: bool) -> PyResult<()> {
        self.0.write_di(index, value).map_err(protocol_err)
    }

    fn read_state(&mut self) -> PyResult<PyJointState> {
        Ok(self.0.read_state().map_err(protocol_err)?.into())
    }
}

/// Log and metrics of one experiment run.
#[pyclass(frozen, name = "RunResult")]
struct PyRunResult(RunOutput);

#[pymethods]
impl PyRunResult {
    fn __len__(&self) -> usize {
        self.0.log.len()
    }

    fn log_csv(&self) -> String {
        self.0.log.to_csv_string()
    }

    fn metrics_json(&self) -> String {
        self.0.report.to_json()
    }

    fn times(&self) -> Vec<f64> {
        self.0.log.times()
    }

    /// Commanded positions of a 1-based joint.
    fn cmd(&self, joint: usize) -> PyResult<Vec<f64>> {
        check_joint(joint)?;
        Ok(self.0.log.cmd_series(joint - 1))
    }

    /// Feedback positions of a 1-based joint.
    fn fb(&self, joint: usize) -> PyResult<Vec<f64>> {
        check_joint(joint)?;
        Ok(self.0.log.fb_series(joint - 1))
    }
}

fn check_joint(joint: usize) -> PyResult<()> {
    if (1..=crx_core::NUM_JOINTS).contains(&joint) {
        Ok(())
    } else {
        Err(PyValueError::new_err(format!("joint must be in 1..=6, got {joint}")))
    }
}

fn run(config: Option<PyRef<'_, PyConfig>>, spec: ExperimentSpec) -> PyResult<PyRunResult> {
    harness::run_embedded(&config_or_default(config), &spec)
        .map(PyRunResult)
        .map_err(crx_err)
}

/// Step to an absolute setpoint on an embedded emulator.
#[pyfunction]
#[pyo3(signature = (joint, setpoint, duration=harness::DEFAULT_STEP_DURATION, config=None))]
fn run_step(joint: usize, setpoint: f64, duration: f64, config: Option<PyRef<'_, PyConfig>>) -> PyResult<PyRunResult> {
    let spec = ExperimentSpec::new(Experiment::Step {
        joint,
        setpoint,
        duration,
    });
    run(config, spec)
}

/// Sinusoid about the current pose on an embedded emulator.
#[pyfunction]
#[pyo3(signature = (joint, amplitude, frequency, duration=harness::DEFAULT_SINE_DURATION, config=None))]
fn run_sine(
    joint: usize,
    amplitude: f64,
    frequency: f64,
    duration: f64,
    config: Option<PyRef<'_, PyConfig>>,
) -> PyResult<PyRunResult> {
    let spec = ExperimentSpec::new(Experiment::Sine {
        joint,
        amplitude,
        frequency,
        duration,
    });
    run(config, spec)
}

/// Trajectory (JSON text) with an optional override schedule (JSON text).
#[pyfunction]
#[pyo3(signature = (trajectory, schedule=None, approach=true, config=None))]
fn run_trajectory(
    trajectory: &str,
    schedule: Option<&str>,
    approach: bool,
    config: Option<PyRef<'_, PyConfig>>,
) -> PyResult<PyRunResult> {
    let trajectory = Trajectory::from_json(trajectory).map_err(crx_err)?;
    let experiment = match schedule {
        Some(text) => Experiment::Override {
            trajectory,
            schedule: OverrideSchedule::from_json(text).map_err(crx_err)?,
        },
        None => Experiment::Trajectory { trajectory },
    };
    let mut spec = ExperimentSpec::new(experiment);
    spec.approach = approach;
    run(config, spec)
}

/// Metrics JSON of a log in CSV form.
#[pyfunction]
#[pyo3(signature = (log_csv, joint=None))]
fn analyze(log_csv: &str, joint: Option<usize>) -> PyResult<String> {
    let log = ExperimentLog::read_csv(log_csv.as_bytes()).map_err(crx_err)?;
    let opts = AnalysisOptions {
        joint,
        ..AnalysisOptions::default()
    };
    Ok(metrics::analyze_log(&log, &opts).map_err(crx_err)?.to_json())
}

/// `(mae, rmse, max_err)` of two equally long series.
#[pyfunction]
fn tracking_errors(cmd: Vec<f64>, fb: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let m = metrics::tracking_errors(&cmd, &fb).map_err(crx_err)?;
    Ok((m.mae, m.rmse, m.max_err))
}

/// Lag in samples maximizing the cross-correlation of `fb` against `cmd`.
#[pyfunction]
fn xcorr_lag(cmd: Vec<f64>, fb: Vec<f64>, max_lag: usize) -> PyResult<usize> {
    metrics::xcorr_lag(&cmd, &fb, max_lag).map_err(crx_err)
}

/// Runs the calibration sweep; returns the result as JSON. `grid` is a JSON
/// object with `kp`, `vmax`, `amax` and `command_latency` lists.
#[pyfunction]
#[pyo3(signature = (grid=None, config=None))]
fn calibrate(py: Python<'_>, grid: Option<&str>, config: Option<PyRef<'_, PyConfig>>) -> PyResult<String> {
    let grid = match grid {
        Some(text) => serde_json::from_str::<harness::CalibrationGrid>(text).map_err(crx_err)?,
        None => harness::CalibrationGrid::default(),
    };
    let base = config_or_default(config);
    let result = py
        .detach(|| harness::calibrate(&base, &grid, &harness::CalibrationTargets::reference()))
        .map_err(crx_err)?;
    Ok(serde_json::to_string_pretty(&result).expect("result serializes"))
}

#[pymodule]
pub fn crx_stream(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CrxError", m.py().get_type::<CrxError>())?;
    m.add("ProtocolError", m.py().get_type::<ProtocolError>())?;
    m.add("DEFAULT_PORT", regproto::DEFAULT_PORT)?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyJointState>()?;
    m.add_class::<PyEmulator>()?;
    m.add_class::<PyClient>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(encode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(decode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(run_step, m)?)?;
    m.add_function(wrap_pyfunction!(run_sine, m)?)?;
    m.add_function(wrap_pyfunction!(run_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(tracking_errors, m)?)?;
    m.add_function(wrap_pyfunction!(xcorr_lag, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    Ok(())
}
