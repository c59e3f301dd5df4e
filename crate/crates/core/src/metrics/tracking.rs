use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    /// Mean absolute error, deg.
    pub mae: f64,
    /// Root mean squared error, deg.
    pub rmse: f64,
    /// Maximum absolute error, deg.
    pub max_err: f64,
}

/// MAE, RMSE and maximum of `|fb_i - cmd_i|`.
pub fn tracking_errors(cmd: &[f64], fb: &[f64]) -> Result<TrackingMetrics, MetricsError> {
    if cmd.len() != fb.len() {
        return Err(MetricsError::LengthMismatch(cmd.len(), fb.len()));
    }
    if cmd.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = cmd.len() as f64;
    let (mut abs_sum, mut sq_sum, mut max_err) = (0.0, 0.0, 0.0f64);
    for (c, f) in cmd.iter().zip(fb) {
        let e = (f - c).abs();
        abs_sum += e;
        sq_sum += e * e;
        max_err = max_err.max(e);
    }
    Ok(TrackingMetrics {
        mae: abs_sum / n,
        rmse: (sq_sum / n).sqrt(),
        max_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_offset() {
        let cmd: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin() * 30.0).collect();
        let m = tracking_errors(&cmd, &cmd).unwrap();
        assert_eq!((m.mae, m.rmse, m.max_err), (0.0, 0.0, 0.0));
        let fb: Vec<f64> = cmd.iter().map(|c| c + 2.0).collect();
        let m = tracking_errors(&cmd, &fb).unwrap();
        for v in [m.mae, m.rmse, m.max_err] {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_computed() {
        // errors 1, -3, 0, 2
        let m = tracking_errors(&[0.0, 0.0, 0.0, 0.0], &[1.0, -3.0, 0.0, 2.0]).unwrap();
        assert_eq!(m.mae, 1.5);
        assert_eq!(m.rmse, 3.5f64.sqrt());
        assert_eq!(m.max_err, 3.0);
    }

    #[test]
    fn bad_lengths() {
        assert!(matches!(
            tracking_errors(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch(1, 2))
        ));
        assert!(matches!(tracking_errors(&[], &[]), Err(MetricsError::Empty)));
    }

    proptest! {
        #[test]
        fn power_mean_ordering(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..200)) {
            let (cmd, fb): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = tracking_errors(&cmd, &fb).unwrap();
            // rounding slack only; equal errors make the three coincide
            let slack = 1e-12 * m.max_err.max(1.0);
            prop_assert!(m.mae >= 0.0);
            prop_assert!(m.mae <= m.rmse + slack);
            prop_assert!(m.rmse <= m.max_err + slack);
        }
    }
}
