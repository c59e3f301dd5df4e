use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::stream::ExperimentLog;

/// Threshold conventions for step metrics, as fractions of the step
/// amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConventions {
    pub rise_low: f64,
    pub rise_high: f64,
    /// Settling band half-width.
    pub settle_band: f64,
    /// Band that counts as "reached" for the peak time of a response
    /// without overshoot.
    pub peak_band: f64,
    /// Trailing fraction of samples averaged for the steady-state error.
    pub steady_window: f64,
}

impl Default for StepConventions {
    fn default() -> Self {
        Self {
            rise_low: 0.10,
            rise_high: 0.90,
            settle_band: 0.02,
            peak_band: 0.001,
            steady_window: 0.10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Rise time, s.
    pub t_r: f64,
    /// Settling time from the first sample, s.
    pub t_s: f64,
    /// Overshoot, percent of amplitude.
    pub os_pct: f64,
    /// Mean absolute steady-state error, deg.
    pub err_ss: f64,
    /// Peak time from the first sample, s.
    pub t_p: f64,
}

/// What could be measured on a response that never reached the upper rise
/// threshold or never stayed inside the settling band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialStep {
    /// Largest fraction of the amplitude reached.
    pub reached: f64,
    pub t_r: Option<f64>,
    pub os_pct: f64,
    pub err_ss: f64,
}

/// First time `progress` reaches `level`, linearly interpolated between
/// samples.
fn crossing(times: &[f64], progress: &[f64], level: f64) -> Option<f64> {
    let i = progress.iter().position(|&p| p >= level)?;
    if i == 0 {
        return Some(times[0]);
    }
    let (p0, p1) = (progress[i - 1], progress[i]);
    let frac = (level - p0) / (p1 - p0);
    Some(times[i - 1] + frac * (times[i] - times[i - 1]))
}

/// Step metrics of `fb` sampled at `times`, for a step from `initial` to
/// `setpoint`. Times are reported relative to `times[0]`.
pub fn step_response(
    times: &[f64],
    fb: &[f64],
    initial: f64,
    setpoint: f64,
    conv: &StepConventions,
) -> Result<StepMetrics, MetricsError> {
    if times.len() != fb.len() {
        return Err(MetricsError::LengthMismatch(times.len(), fb.len()));
    }
    if fb.is_empty() {
        return Err(MetricsError::Empty);
    }
    let t0 = times[0];
    let rel: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let n = fb.len();
    let window = ((n as f64 * conv.steady_window).ceil() as usize).clamp(1, n);
    let err_ss = fb[n - window..].iter().map(|y| (y - setpoint).abs()).sum::<f64>() / window as f64;

    let amplitude = setpoint - initial;
    if amplitude.abs() < 1e-12 {
        return Ok(StepMetrics {
            t_r: 0.0,
            t_s: 0.0,
            os_pct: 0.0,
            err_ss,
            t_p: 0.0,
        });
    }
    let sign = amplitude.signum();
    let mag = amplitude.abs();
    // progress toward the setpoint, 0 at `initial`, 1 at `setpoint`
    let progress: Vec<f64> = fb.iter().map(|y| (y - initial) / amplitude).collect();
    let overshoot = fb
        .iter()
        .map(|y| sign * (y - setpoint))
        .fold(0.0, f64::max);
    let os_pct = overshoot / mag * 100.0;

    let t_low = crossing(&rel, &progress, conv.rise_low);
    let t_high = crossing(&rel, &progress, conv.rise_high);
    let t_r = match (t_low, t_high) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => {
            return Err(MetricsError::Unsettled(PartialStep {
                reached: progress.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                t_r: None,
                os_pct,
                err_ss,
            }))
        }
    };

    let band = conv.settle_band * mag;
    let t_s = match fb.iter().rposition(|y| (y - setpoint).abs() > band) {
        None => 0.0,
        Some(last) if last + 1 < n => rel[last + 1],
        Some(_) => {
            return Err(MetricsError::Unsettled(PartialStep {
                reached: progress.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                t_r: Some(t_r),
                os_pct,
                err_ss,
            }))
        }
    };

    let t_p = if os_pct > 0.0 {
        let peak = (0..n)
            .max_by(|&a, &b| (sign * fb[a]).total_cmp(&(sign * fb[b])).then(b.cmp(&a)))
            .expect("nonempty");
        rel[peak]
    } else {
        let reach = conv.peak_band * mag;
        match fb.iter().position(|y| (y - setpoint).abs() <= reach) {
            Some(i) => rel[i],
            None => {
                let closest = (0..n)
                    .min_by(|&a, &b| (fb[a] - setpoint).abs().total_cmp(&(fb[b] - setpoint).abs()))
                    .expect("nonempty");
                rel[closest]
            }
        }
    };

    Ok(StepMetrics {
        t_r,
        t_s,
        os_pct,
        err_ss,
        t_p,
    })
}

/// Step metrics of one joint of a logged run, measured from the first
/// feedback sample.
pub fn step_metrics(
    log: &ExperimentLog,
    joint: usize,
    setpoint: f64,
    conv: &StepConventions,
) -> Result<StepMetrics, MetricsError> {
    let fb = log.fb_series(joint);
    let initial = *fb.first().ok_or(MetricsError::Empty)?;
    step_response(&log.times(), &fb, initial, setpoint, conv)
}
