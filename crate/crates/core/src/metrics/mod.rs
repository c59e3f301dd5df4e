//! Quantitative analysis of logged runs.
//!
//! All angles are in degrees, all times in seconds.

mod lag;
mod report;
mod step;
mod tracking;

use thiserror::Error;

pub use lag::{
    control_frequency, cross_correlation, default_max_lag, estimate_lag, path_following_errors,
    xcorr_lag, CycleStats, LagEstimate,
};
pub use report::{analyze_log, central_difference, write_aligned_csv, write_plot_csv, AnalysisOptions, AnalysisReport, StepReport, VelocityReport};
pub use step::{step_metrics, step_response, PartialStep, StepConventions, StepMetrics};
pub use tracking::{tracking_errors, TrackingMetrics};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series is empty")]
    Empty,
    #[error("need at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("timestamps are not strictly increasing")]
    NonMonotoneTime,
    #[error("max lag {max_lag} must be below half the series length {len}")]
    LagTooLarge { max_lag: usize, len: usize },
    #[error("lag is undefined for an all-zero signal")]
    UndefinedLag,
    #[error("response never settled (reached {:.1}% of the step)", .0.reached * 100.0)]
    Unsettled(PartialStep),
    #[error("joint {0} out of range 1..=6")]
    BadJoint(usize),
}
