use serde::{Deserialize, Serialize};

use super::tracking::{tracking_errors, TrackingMetrics};
use super::MetricsError;

/// Signals whose mean-removed energy is below this are treated as zero.
const ZERO_ENERGY: f64 = 1e-18;

fn demean(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

fn check_pair(cmd: &[f64], fb: &[f64], max_lag: usize) -> Result<(), MetricsError> {
    if cmd.len() != fb.len() {
        return Err(MetricsError::LengthMismatch(cmd.len(), fb.len()));
    }
    if cmd.is_empty() {
        return Err(MetricsError::Empty);
    }
    if 2 * max_lag >= cmd.len() {
        return Err(MetricsError::LagTooLarge {
            max_lag,
            len: cmd.len(),
        });
    }
    Ok(())
}

/// `R[tau] = sum_{i=0}^{n-1-tau} cmd[i] * fb[i + tau]` on mean-removed
/// signals, for `tau` in `0..=max_lag`. Only the overlapping samples are
/// summed; there is no zero padding.
pub fn cross_correlation(cmd: &[f64], fb: &[f64], max_lag: usize) -> Result<Vec<f64>, MetricsError> {
    check_pair(cmd, fb, max_lag)?;
    let c = demean(cmd);
    let f = demean(fb);
    let energy = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    if energy(&c) < ZERO_ENERGY || energy(&f) < ZERO_ENERGY {
        return Err(MetricsError::UndefinedLag);
    }
    let n = c.len();
    Ok((0..=max_lag)
        .map(|tau| (0..n - tau).map(|i| c[i] * f[i + tau]).sum())
        .collect())
}

/// Lag in samples that maximises [`cross_correlation`]. Feedback is assumed
/// to trail the command, so only `tau >= 0` is searched; ties go to the
/// smallest lag.
pub fn xcorr_lag(cmd: &[f64], fb: &[f64], max_lag: usize) -> Result<usize, MetricsError> {
    let r = cross_correlation(cmd, fb, max_lag)?;
    let mut best = 0;
    for (tau, &v) in r.iter().enumerate() {
        if v > r[best] {
            best = tau;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    /// Mean sample interval, s.
    pub mean_cycle: f64,
    /// Standard deviation of the sample interval, s.
    pub stddev: f64,
    /// `1 / mean_cycle`, Hz.
    pub control_freq: f64,
}

/// Control frequency from sample timestamps.
pub fn control_frequency(times: &[f64]) -> Result<CycleStats, MetricsError> {
    if times.len() < 2 {
        return Err(MetricsError::TooShort(times.len()));
    }
    let intervals: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if intervals.iter().any(|dt| !(*dt > 0.0)) {
        return Err(MetricsError::NonMonotoneTime);
    }
    let n = intervals.len() as f64;
    let mean_cycle = (times[times.len() - 1] - times[0]) / n;
    let var = intervals.iter().map(|dt| (dt - mean_cycle).powi(2)).sum::<f64>() / n;
    Ok(CycleStats {
        mean_cycle,
        stddev: var.sqrt(),
        control_freq: 1.0 / mean_cycle,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagEstimate {
    pub tau_samples: usize,
    pub tau_seconds: f64,
    pub mean_cycle: f64,
    pub control_freq: f64,
}

/// Command-to-feedback delay from the cross-correlation peak, converted to
/// seconds with the mean cycle time of `times`.
pub fn estimate_lag(
    times: &[f64],
    cmd: &[f64],
    fb: &[f64],
    max_lag: usize,
) -> Result<LagEstimate, MetricsError> {
    if times.len() != cmd.len() {
        return Err(MetricsError::LengthMismatch(times.len(), cmd.len()));
    }
    let tau = xcorr_lag(cmd, fb, max_lag)?;
    let cycles = control_frequency(times)?;
    Ok(LagEstimate {
        tau_samples: tau,
        tau_seconds: tau as f64 * cycles.mean_cycle,
        mean_cycle: cycles.mean_cycle,
        control_freq: cycles.control_freq,
    })
}

/// Tracking errors between `cmd[i]` and `fb[i + tau*]` over the
/// `n - tau*` overlapping samples. Returns the metrics and `tau*`.
pub fn path_following_errors(
    cmd: &[f64],
    fb: &[f64],
    max_lag: usize,
) -> Result<(TrackingMetrics, usize), MetricsError> {
    let tau = xcorr_lag(cmd, fb, max_lag)?;
    let n = cmd.len();
    Ok((tracking_errors(&cmd[..n - tau], &fb[tau..])?, tau))
}

/// Largest lag searched by default: two seconds of samples, capped below
/// half the series length.
pub fn default_max_lag(len: usize, mean_cycle: f64) -> usize {
    let two_seconds = (2.0 / mean_cycle).round() as usize;
    two_seconds.min(len.saturating_sub(1) / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine(n: usize, period: f64, shift: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * (i as f64 - shift as f64) / period).sin())
            .collect()
    }

    /// Straightforward O(n * lags) oracle without mean removal shortcuts.
    fn brute_force_lag(cmd: &[f64], fb: &[f64], max_lag: usize) -> usize {
        let mc = cmd.iter().sum::<f64>() / cmd.len() as f64;
        let mf = fb.iter().sum::<f64>() / fb.len() as f64;
        let mut best = (0usize, f64::NEG_INFINITY);
        for tau in 0..=max_lag {
            let mut acc = 0.0;
            for i in 0..cmd.len() - tau {
                acc += (cmd[i] - mc) * (fb[i + tau] - mf);
            }
            if acc > best.1 {
                best = (tau, acc);
            }
        }
        best.0
    }

    #[test]
    fn zero_and_constructed_shift() {
        let cmd = sine(250, 50.0, 0);
        assert_eq!(xcorr_lag(&cmd, &cmd, 40).unwrap(), 0);
        let fb = sine(250, 50.0, 8);
        assert_eq!(xcorr_lag(&cmd, &fb, 40).unwrap(), 8);
        let (m, tau) = path_following_errors(&cmd, &fb, 40).unwrap();
        assert_eq!(tau, 8);
        assert!(m.max_err < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            xcorr_lag(&[0.0; 100], &sine(100, 20.0, 0), 10),
            Err(MetricsError::UndefinedLag)
        ));
        // a constant is all-zero after mean removal
        assert!(matches!(
            xcorr_lag(&[3.0; 100], &sine(100, 20.0, 0), 10),
            Err(MetricsError::UndefinedLag)
        ));
        assert!(matches!(
            xcorr_lag(&sine(100, 20.0, 0), &sine(100, 20.0, 0), 50),
            Err(MetricsError::LagTooLarge { .. })
        ));
    }

    #[test]
    fn frequency_definitions() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 / 25.0).collect();
        let c = control_frequency(&t).unwrap();
        assert!((c.control_freq - 25.0).abs() < 1e-9);
        assert!(c.stddev < 1e-12);
        assert_eq!(control_frequency(&[0.0, 0.1]).unwrap().control_freq, 10.0);
        assert!(matches!(control_frequency(&[0.0]), Err(MetricsError::TooShort(1))));
        assert!(matches!(
            control_frequency(&[0.0, 0.2, 0.1]),
            Err(MetricsError::NonMonotoneTime)
        ));
    }

    #[test]
    fn lag_seconds_use_mean_cycle() {
        let t: Vec<f64> = (0..300).map(|i| 1.0 + i as f64 * 0.04).collect();
        let est = estimate_lag(&t, &sine(300, 50.0, 0), &sine(300, 50.0, 8), 50).unwrap();
        assert_eq!(est.tau_samples, 8);
        assert!((est.tau_seconds - 0.32).abs() < 1e-9);
        assert!((est.control_freq - 25.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            cmd in prop::collection::vec(-10.0f64..10.0, 40..120),
            seed in prop::collection::vec(-10.0f64..10.0, 120),
        ) {
            let fb = &seed[..cmd.len()];
            let max_lag = (cmd.len() - 1) / 2;
            match xcorr_lag(&cmd, fb, max_lag) {
                Ok(tau) => prop_assert_eq!(tau, brute_force_lag(&cmd, fb, max_lag)),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }

        #[test]
        fn recovers_injected_shift(
            (k, period) in (0usize..=25).prop_flat_map(|k| (Just(k), (2 * k + 4)..(2 * k + 60))),
            periods in 2usize..40,
        ) {
            let n = period * periods;
            // the overlap sum favours short lags unless the series is long
            // compared with the period
            prop_assume!(n * 10 >= period * period);
            let cmd = sine(n, period as f64, 0);
            let fb = sine(n, period as f64, k);
            let max_lag = 25.min((n - 1) / 2);
            prop_assert_eq!(xcorr_lag(&cmd, &fb, max_lag).unwrap(), k);
            let (m, _) = path_following_errors(&cmd, &fb, max_lag).unwrap();
            prop_assert!(m.max_err < 1e-9);
        }
    }
}
