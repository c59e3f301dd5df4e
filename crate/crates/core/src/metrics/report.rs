use std::io::Write;

use serde::{Deserialize, Serialize};

use super::lag::{control_frequency, default_max_lag, estimate_lag, path_following_errors, CycleStats, LagEstimate};
use super::step::{step_response, PartialStep, StepConventions, StepMetrics};
use super::tracking::{tracking_errors, TrackingMetrics};
use super::MetricsError;
use crate::pose::NUM_JOINTS;
use crate::stream::ExperimentLog;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnalysisOptions {
    /// 1-based joint; picked from the log when `None`.
    pub joint: Option<usize>,
    pub conventions: StepConventions,
    /// Cross-correlation search range in samples; two seconds when `None`.
    pub max_lag: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub initial: f64,
    pub setpoint: f64,
    pub metrics: Option<StepMetrics>,
    pub unsettled: Option<PartialStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityReport {
    /// Largest |velocity| reported by the controller, deg/s.
    pub max_reported: f64,
    /// Largest |velocity| from central differences of feedback, deg/s.
    pub max_derived: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// 1-based joint the metrics refer to.
    pub joint: usize,
    pub rows: usize,
    /// `"step"` when the command is constant, `"tracking"` otherwise.
    pub kind: String,
    pub control: Option<CycleStats>,
    pub velocity: VelocityReport,
    pub tracking: TrackingMetrics,
    pub step: Option<StepReport>,
    pub path_following: Option<TrackingMetrics>,
    pub lag: Option<LagEstimate>,
    pub notes: Vec<String>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Central differences, one-sided at the ends.
pub fn central_difference(times: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (x[b] - x[a]) / (times[b] - times[a])
        })
        .collect()
}

fn range(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Joint with the widest command range; for constant commands, the one
/// furthest from its initial feedback.
fn detect_joint(log: &ExperimentLog) -> usize {
    let pick = |score: &dyn Fn(usize) -> f64| {
        (0..NUM_JOINTS)
            .map(|j| (j, score(j)))
            .filter(|(_, s)| *s > 1e-12)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(j, _)| j)
    };
    let first = log.rows[0];
    pick(&|j| range(&log.cmd_series(j)))
        .or_else(|| pick(&|j| (first.cmd[j] - first.fb[j]).abs()))
        .or_else(|| pick(&|j| range(&log.fb_series(j))))
        .unwrap_or(0)
}

/// Every metric that applies to `log`. A pure function of the log, so the
/// offline analysis of a saved run matches the run-time report.
pub fn analyze_log(log: &ExperimentLog, opts: &AnalysisOptions) -> Result<AnalysisReport, MetricsError> {
    if log.is_empty() {
        return Err(MetricsError::Empty);
    }
    let joint = match opts.joint {
        Some(j) if (1..=NUM_JOINTS).contains(&j) => j - 1,
        Some(j) => return Err(MetricsError::BadJoint(j)),
        None => detect_joint(log),
    };
    let times = log.times();
    let cmd = log.cmd_series(joint);
    let fb = log.fb_series(joint);
    let mut notes = Vec::new();

    let control = match control_frequency(&times) {
        Ok(c) => Some(c),
        Err(MetricsError::TooShort(_)) => None,
        Err(e) => return Err(e),
    };
    let velocity = VelocityReport {
        max_reported: log.vel_series(joint).iter().fold(0.0, |m, v| m.max(v.abs())),
        max_derived: central_difference(&times, &fb)
            .iter()
            .fold(0.0, |m, v| m.max(v.abs())),
    };
    let tracking = tracking_errors(&cmd, &fb)?;

    let constant_cmd = range(&cmd) <= 1e-12;
    let mut step = None;
    let mut path_following = None;
    let mut lag = None;
    if constant_cmd {
        let (initial, setpoint) = (fb[0], cmd[0]);
        let (metrics, unsettled) = match step_response(&times, &fb, initial, setpoint, &opts.conventions) {
            Ok(m) => (Some(m), None),
            Err(MetricsError::Unsettled(p)) => {
                notes.push("step response did not settle".into());
                (None, Some(p))
            }
            Err(e) => return Err(e),
        };
        step = Some(StepReport {
            initial,
            setpoint,
            metrics,
            unsettled,
        });
    } else if let Some(cycles) = control {
        let max_lag = opts
            .max_lag
            .unwrap_or_else(|| default_max_lag(cmd.len(), cycles.mean_cycle));
        match estimate_lag(&times, &cmd, &fb, max_lag) {
            Ok(est) => {
                lag = Some(est);
                path_following = Some(path_following_errors(&cmd, &fb, max_lag)?.0);
            }
            Err(e) => notes.push(format!("lag: {e}")),
        }
    }

    Ok(AnalysisReport {
        joint: joint + 1,
        rows: log.len(),
        kind: if constant_cmd { "step" } else { "tracking" }.into(),
        control,
        velocity,
        tracking,
        step,
        path_following,
        lag,
        notes,
    })
}

/// `t,cmd,fb,vel` for one joint; `vel` is differentiated from feedback.
pub fn write_plot_csv<W: Write>(log: &ExperimentLog, joint: usize, out: W) -> Result<(), csv::Error> {
    let times = log.times();
    let fb = log.fb_series(joint);
    let vel = central_difference(&times, &fb);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "cmd", "fb", "vel"])?;
    for (i, row) in log.rows.iter().enumerate() {
        w.write_record([
            row.t.to_string(),
            row.cmd[joint].to_string(),
            fb[i].to_string(),
            vel[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,cmd,fb_aligned` with feedback shifted back by `tau` samples.
pub fn write_aligned_csv<W: Write>(
    log: &ExperimentLog,
    joint: usize,
    tau: usize,
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "cmd", "fb_aligned"])?;
    let n = log.len();
    for i in 0..n.saturating_sub(tau) {
        w.write_record([
            log.rows[i].t.to_string(),
            log.rows[i].cmd[joint].to_string(),
            log.rows[i + tau].fb[joint].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
