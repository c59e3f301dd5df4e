use serde::{Deserialize, Serialize};

use crate::emulator::{EmulatorConfig, PerJoint};
use crate::metrics::MetricsError;

use super::experiment::{run_embedded, Experiment, ExperimentSpec};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTarget {
    pub setpoint: f64,
    pub t_r: f64,
    pub t_s: f64,
    /// Peak time; left out of the objective when absent.
    #[serde(default)]
    pub t_p: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineTarget {
    pub frequency: f64,
    pub mae: f64,
}

/// Reference measurements the emulator is fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    /// 1-based joint driven by every experiment.
    pub joint: usize,
    pub amplitude: f64,
    pub steps: Vec<StepTarget>,
    pub sines: Vec<SineTarget>,
    /// Command-to-feedback lag, s, averaged over the sines listed in
    /// `lag_frequencies`.
    pub lag: f64,
    pub lag_frequencies: Vec<f64>,
}

impl CalibrationTargets {
    /// Step, tracking and delay figures measured on the real arm.
    pub fn reference() -> Self {
        let step = |setpoint, t_r, t_s, t_p| StepTarget {
            setpoint,
            t_r,
            t_s,
            t_p: Some(t_p),
        };
        let sine = |frequency, mae| SineTarget { frequency, mae };
        Self {
            joint: 1,
            amplitude: 30.0,
            steps: vec![
                step(30.0, 0.51, 0.90, 1.15),
                step(45.0, 0.64, 1.10, 1.35),
                step(90.0, 1.22, 1.79, 2.12),
            ],
            sines: vec![sine(0.1, 3.72), sine(0.25, 7.77), sine(0.5, 18.26)],
            lag: 0.31,
            lag_frequencies: vec![0.1, 0.25],
        }
    }

    /// The same figures measured on an emulator with `config`, so that a
    /// calibration against them has a known answer.
    pub fn measured_on(config: &EmulatorConfig, like: &CalibrationTargets) -> Result<Self, HarnessError> {
        let m = measure(config, like)?;
        let mut out = like.clone();
        for (t, s) in out.steps.iter_mut().zip(&m.steps) {
            let metrics = s.ok_or_else(|| HarnessError::Spec("ground truth step did not settle".into()))?;
            t.t_r = metrics.0;
            t.t_s = metrics.1;
            t.t_p = t.t_p.map(|_| metrics.2);
        }
        for (t, mae) in out.sines.iter_mut().zip(&m.mae) {
            t.mae = *mae;
        }
        out.lag = m.lag;
        Ok(out)
    }
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self::reference()
    }
}

/// The four fitted parameters, uniform over all joints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub kp: f64,
    pub vmax: f64,
    pub amax: f64,
    pub command_latency: f64,
}

impl CalibrationParams {
    /// Hand-picked values the sweep is compared against.
    pub const STARTING_POINT: CalibrationParams = CalibrationParams {
        kp: 4.3,
        vmax: 60.0,
        amax: 400.0,
        command_latency: 0.25,
    };

    pub fn apply(&self, base: &EmulatorConfig) -> EmulatorConfig {
        EmulatorConfig {
            kp: PerJoint::uniform(self.kp),
            vmax: PerJoint::uniform(self.vmax),
            amax: PerJoint::uniform(self.amax),
            command_latency: self.command_latency,
            ..base.clone()
        }
    }

    /// Parameters of `config`'s first joint.
    pub fn of(config: &EmulatorConfig) -> Self {
        Self {
            kp: config.kp.get(0),
            vmax: config.vmax.get(0),
            amax: config.amax.get(0),
            command_latency: config.command_latency,
        }
    }
}

/// Candidate values per parameter; the sweep visits their product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub kp: Vec<f64>,
    pub vmax: Vec<f64>,
    pub amax: Vec<f64>,
    pub command_latency: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .map(|v| (v * 1e6).round() / 1e6)
        .collect()
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        Self {
            kp: linspace(3.0, 13.0, 21),
            vmax: vec![55.0, 57.5, 60.0, 62.5, 65.0],
            amax: vec![200.0, 300.0, 400.0, 600.0, 800.0],
            command_latency: linspace(0.12, 0.32, 11),
        }
    }
}

impl CalibrationGrid {
    pub fn len(&self) -> usize {
        self.kp.len() * self.vmax.len() * self.amax.len() * self.command_latency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn points(&self) -> impl Iterator<Item = CalibrationParams> + '_ {
        self.kp.iter().flat_map(move |&kp| {
            self.vmax.iter().flat_map(move |&vmax| {
                self.amax.iter().flat_map(move |&amax| {
                    self.command_latency.iter().map(move |&command_latency| CalibrationParams {
                        kp,
                        vmax,
                        amax,
                        command_latency,
                    })
                })
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub model: f64,
    pub target: f64,
    /// `(model - target) / target`.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: CalibrationParams,
    /// Sum of squared normalized residuals; infinite when a step response
    /// overshoots or fails to settle.
    pub objective: f64,
    pub residuals: Vec<Residual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: CalibrationParams,
    pub objective: f64,
    pub residuals: Vec<Residual>,
    /// [`CalibrationParams::STARTING_POINT`], for comparison.
    pub start: Evaluation,
    pub evaluations: usize,
}

const REFINE_ROUNDS: usize = 3;

fn to_array(p: CalibrationParams) -> [f64; 4] {
    [p.kp, p.vmax, p.amax, p.command_latency]
}

/// Rounded to a micro-unit so refined values print cleanly.
fn from_array(a: [f64; 4]) -> CalibrationParams {
    let r = |v: f64| (v * 1e6).round() / 1e6;
    CalibrationParams {
        kp: r(a[0]),
        vmax: r(a[1]),
        amax: r(a[2]),
        command_latency: r(a[3]),
    }
}

fn bounds(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Typical gap between neighbouring grid values; zero for a single value.
fn spacing(values: &[f64]) -> f64 {
    let (lo, hi) = bounds(values);
    if values.len() < 2 {
        0.0
    } else {
        (hi - lo) / (values.len() - 1) as f64
    }
}

/// Raw figures of one configuration, in target order.
struct Measured {
    /// `(t_r, t_s, t_p)` per step, `None` when the response did not settle.
    steps: Vec<Option<(f64, f64, f64)>>,
    overshoot: bool,
    mae: Vec<f64>,
    lag: f64,
}

fn measure(config: &EmulatorConfig, targets: &CalibrationTargets) -> Result<Measured, HarnessError> {
    let mut steps = Vec::new();
    let mut overshoot = false;
    for t in &targets.steps {
        let spec = ExperimentSpec::new(Experiment::step(targets.joint, t.setpoint));
        let step = run_embedded(config, &spec)?
            .report
            .step
            .ok_or(HarnessError::Metrics(MetricsError::Empty))?;
        match step.metrics {
            Some(m) => {
                overshoot |= m.os_pct > 0.0;
                steps.push(Some((m.t_r, m.t_s, m.t_p)));
            }
            None => steps.push(None),
        }
    }
    let mut mae = Vec::new();
    let mut lags = Vec::new();
    let mut frequencies: Vec<f64> = targets.sines.iter().map(|s| s.frequency).collect();
    for f in &targets.lag_frequencies {
        if !frequencies.contains(f) {
            frequencies.push(*f);
        }
    }
    for (i, f) in frequencies.iter().enumerate() {
        let spec = ExperimentSpec::new(Experiment::sine(targets.joint, targets.amplitude, *f));
        let report = run_embedded(config, &spec)?.report;
        if i < targets.sines.len() {
            mae.push(report.tracking.mae);
        }
        if targets.lag_frequencies.contains(f) {
            let lag = report.lag.ok_or(HarnessError::Metrics(MetricsError::UndefinedLag))?;
            lags.push(lag.tau_seconds);
        }
    }
    let lag = if lags.is_empty() {
        0.0
    } else {
        lags.iter().sum::<f64>() / lags.len() as f64
    };
    Ok(Measured {
        steps,
        overshoot,
        mae,
        lag,
    })
}

/// Objective and residuals of `params` applied to `base`.
pub fn evaluate(
    base: &EmulatorConfig,
    params: CalibrationParams,
    targets: &CalibrationTargets,
) -> Result<Evaluation, HarnessError> {
    let config = params.apply(base);
    config.validate()?;
    let m = measure(&config, targets)?;
    let mut residuals = Vec::new();
    let mut push = |name: String, model: f64, target: f64| {
        residuals.push(Residual {
            name,
            model,
            target,
            normalized: (model - target) / target,
        })
    };
    let mut feasible = !m.overshoot;
    for (t, s) in targets.steps.iter().zip(&m.steps) {
        let (t_r, t_s, t_p) = s.unwrap_or_else(|| {
            feasible = false;
            (f64::NAN, f64::NAN, f64::NAN)
        });
        push(format!("t_r@{}", t.setpoint), t_r, t.t_r);
        push(format!("t_s@{}", t.setpoint), t_s, t.t_s);
        if let Some(target) = t.t_p {
            push(format!("t_p@{}", t.setpoint), t_p, target);
        }
    }
    for (t, mae) in targets.sines.iter().zip(&m.mae) {
        push(format!("mae@{}", t.frequency), *mae, t.mae);
    }
    if !targets.lag_frequencies.is_empty() {
        push("lag".into(), m.lag, targets.lag);
    }
    let objective = if feasible {
        residuals.iter().map(|r| r.normalized * r.normalized).sum()
    } else {
        f64::INFINITY
    };
    Ok(Evaluation {
        params,
        objective,
        residuals,
    })
}

/// Exhaustive sweep of `grid`, then coordinate descent from the best grid
/// point with step sizes halved each round, staying inside the grid's
/// bounds. Only strict improvements are accepted and the first minimum in
/// sweep order wins, so the result is deterministic.
pub fn calibrate(
    base: &EmulatorConfig,
    grid: &CalibrationGrid,
    targets: &CalibrationTargets,
) -> Result<CalibrationResult, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let start = evaluate(base, CalibrationParams::STARTING_POINT, targets)?;
    let mut best: Option<Evaluation> = None;
    let mut evaluations = 0;
    for params in grid.points() {
        let eval = evaluate(base, params, targets)?;
        evaluations += 1;
        log::debug!("{params:?} -> {}", eval.objective);
        if best.as_ref().is_none_or(|b| eval.objective < b.objective) {
            best = Some(eval);
        }
    }
    let mut best = best.expect("grid is not empty");
    if !best.objective.is_finite() {
        return Err(HarnessError::NoFeasiblePoint);
    }

    let axes = [&grid.kp, &grid.vmax, &grid.amax, &grid.command_latency];
    let mut steps = axes.map(|v| spacing(v));
    for _ in 0..REFINE_ROUNDS {
        for step in &mut steps {
            *step /= 2.0;
        }
        let mut improved = true;
        while improved {
            improved = false;
            for (axis, values) in axes.iter().enumerate() {
                let (lo, hi) = bounds(values);
                for dir in [-1.0, 1.0] {
                    let mut p = to_array(best.params);
                    p[axis] = (p[axis] + dir * steps[axis]).clamp(lo, hi);
                    if p[axis] == to_array(best.params)[axis] {
                        continue;
                    }
                    let eval = evaluate(base, from_array(p), targets)?;
                    evaluations += 1;
                    if eval.objective < best.objective {
                        best = eval;
                        improved = true;
                    }
                }
            }
        }
    }
    Ok(CalibrationResult {
        params: best.params,
        objective: best.objective,
        residuals: best.residuals,
        start,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::{DEFAULT_AMAX, DEFAULT_COMMAND_LATENCY, DEFAULT_KP, DEFAULT_VMAX};

    fn grid(kp: &[f64], vmax: &[f64], amax: &[f64], latency: &[f64]) -> CalibrationGrid {
        CalibrationGrid {
            kp: kp.to_vec(),
            vmax: vmax.to_vec(),
            amax: amax.to_vec(),
            command_latency: latency.to_vec(),
        }
    }

    #[test]
    fn empty_grid_is_an_error() {
        let g = grid(&[], &[60.0], &[400.0], &[0.2]);
        assert!(matches!(
            calibrate(&EmulatorConfig::default(), &g, &CalibrationTargets::reference()),
            Err(HarnessError::EmptyGrid)
        ));
    }

    #[test]
    fn recovers_synthetic_ground_truth() {
        let truth = CalibrationParams {
            kp: 9.0,
            vmax: 55.0,
            amax: 800.0,
            command_latency: 0.2,
        };
        let base = EmulatorConfig::default();
        let targets = CalibrationTargets::measured_on(&truth.apply(&base), &CalibrationTargets::reference())
            .unwrap();
        let g = grid(&[6.0, 9.0], &[55.0, 60.0], &[400.0, 800.0], &[0.1, 0.2]);
        let result = calibrate(&base, &g, &targets).unwrap();
        assert_eq!(result.params, truth);
        assert_eq!(result.objective, 0.0);
        assert!(result.residuals.iter().all(|r| r.normalized == 0.0));
    }

    #[test]
    fn improves_on_starting_point() {
        let base = EmulatorConfig::default();
        let start = CalibrationParams::STARTING_POINT;
        let g = grid(&[start.kp, DEFAULT_KP], &[DEFAULT_VMAX], &[DEFAULT_AMAX], &[DEFAULT_COMMAND_LATENCY]);
        let result = calibrate(&base, &g, &CalibrationTargets::reference()).unwrap();
        assert!(result.objective < result.start.objective);
        assert!(result.objective.is_finite());
        // reference targets carry thirteen figures
        assert_eq!(result.residuals.len(), 13);
    }

    #[test]
    fn overshoot_is_infeasible() {
        // kp above 2 amax / vmax lets the servo overshoot
        let p = CalibrationParams {
            kp: 30.0,
            vmax: 60.0,
            amax: 100.0,
            command_latency: 0.1,
        };
        let eval = evaluate(&EmulatorConfig::default(), p, &CalibrationTargets::reference()).unwrap();
        assert_eq!(eval.objective, f64::INFINITY);
    }
}
