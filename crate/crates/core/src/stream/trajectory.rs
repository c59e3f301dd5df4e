use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{JointPose, NUM_JOINTS};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Time from start, s.
    pub t: f64,
    /// Joint positions, deg.
    pub q: JointPose,
    /// Optional joint velocities, deg/s. Carried through but not used by
    /// linear sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qd: Option<[f64; NUM_JOINTS]>,
}

/// Timed joint-space path, sampled by linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct Trajectory {
    points: Vec<Waypoint>,
}

#[derive(Deserialize)]
struct RawTrajectory {
    points: Vec<Waypoint>,
}

impl TryFrom<RawTrajectory> for Trajectory {
    type Error = TrajectoryError;

    fn try_from(raw: RawTrajectory) -> Result<Self, TrajectoryError> {
        Trajectory::new(raw.points)
    }
}

impl Trajectory {
    pub fn new(points: Vec<Waypoint>) -> Result<Self, TrajectoryError> {
        if points.len() < 2 {
            return Err(TrajectoryError::Invalid(
                "trajectory needs at least two points".into(),
            ));
        }
        if points[0].t != 0.0 {
            return Err(TrajectoryError::Invalid(format!(
                "trajectory must start at t = 0, got {}",
                points[0].t
            )));
        }
        for pair in points.windows(2) {
            if !(pair[1].t > pair[0].t) || !pair[1].t.is_finite() {
                return Err(TrajectoryError::Invalid(format!(
                    "waypoint times must be strictly increasing ({} then {})",
                    pair[0].t, pair[1].t
                )));
            }
        }
        Ok(Self { points })
    }

    /// Builds a trajectory from `(t, pose)` pairs.
    pub fn from_poses(points: impl IntoIterator<Item = (f64, JointPose)>) -> Result<Self, TrajectoryError> {
        Self::new(
            points
                .into_iter()
                .map(|(t, q)| Waypoint { t, q, qd: None })
                .collect(),
        )
    }

    pub fn points(&self) -> &[Waypoint] {
        &self.points
    }

    pub fn start(&self) -> JointPose {
        self.points[0].q
    }

    pub fn end(&self) -> JointPose {
        self.points[self.points.len() - 1].q
    }

    pub fn duration(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    /// Largest per-joint speed along any segment, deg/s.
    pub fn peak_speed(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].q.max_abs_diff(&w[1].q) / (w[1].t - w[0].t))
            .fold(0.0, f64::max)
    }

    pub fn from_json(text: &str) -> Result<Self, TrajectoryError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrajectoryError> {
        Self::from_json(&read(path.as_ref())?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }
}

fn read(path: &Path) -> Result<String, TrajectoryError> {
    fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Linear interpolation at scaled time `s`, clamped to the end points.
pub fn sample_trajectory(traj: &Trajectory, s: f64) -> JointPose {
    let pts = traj.points();
    if s <= pts[0].t {
        return pts[0].q;
    }
    let last = &pts[pts.len() - 1];
    if s >= last.t {
        return last.q;
    }
    // first waypoint strictly after s; guaranteed in 1..len
    let hi = pts.partition_point(|p| p.t <= s);
    let (a, b) = (&pts[hi - 1], &pts[hi]);
    a.q.lerp(&b.q, (s - a.t) / (b.t - a.t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverrideEntry {
    pub t: f64,
    pub ovr: f64,
}

/// Piecewise-constant speed override over wall time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct OverrideSchedule {
    entries: Vec<OverrideEntry>,
}

#[derive(Deserialize)]
struct RawSchedule {
    entries: Vec<OverrideEntry>,
}

impl TryFrom<RawSchedule> for OverrideSchedule {
    type Error = TrajectoryError;

    fn try_from(raw: RawSchedule) -> Result<Self, TrajectoryError> {
        OverrideSchedule::new(raw.entries)
    }
}

pub fn valid_override(value: f64) -> bool {
    value > 0.0 && value <= 1.0
}

impl OverrideSchedule {
    pub fn new(entries: Vec<OverrideEntry>) -> Result<Self, TrajectoryError> {
        match entries.first() {
            Some(e) if e.t == 0.0 => {}
            _ => {
                return Err(TrajectoryError::Invalid(
                    "override schedule must start with an entry at t = 0".into(),
                ))
            }
        }
        for e in &entries {
            if !valid_override(e.ovr) {
                return Err(TrajectoryError::Invalid(format!(
                    "override {} at t = {} outside (0, 1]",
                    e.ovr, e.t
                )));
            }
        }
        if entries.windows(2).any(|w| !(w[1].t >= w[0].t)) {
            return Err(TrajectoryError::Invalid(
                "override schedule times must be nondecreasing".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn constant(ovr: f64) -> Result<Self, TrajectoryError> {
        Self::new(vec![OverrideEntry { t: 0.0, ovr }])
    }

    pub fn entries(&self) -> &[OverrideEntry] {
        &self.entries
    }

    /// Override in force at wall time `t` (latest entry with `entry.t <= t`).
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.entries.partition_point(|e| e.t <= t);
        self.entries[idx.saturating_sub(1)].ovr
    }

    pub fn from_json(text: &str) -> Result<Self, TrajectoryError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrajectoryError> {
        Self::from_json(&read(path.as_ref())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(v: f64) -> JointPose {
        JointPose::new([v, -v, 0.5 * v, 0.0, 2.0 * v, 1.0]).unwrap()
    }

    fn traj() -> Trajectory {
        Trajectory::from_poses([(0.0, pose(0.0)), (1.0, pose(10.0)), (3.0, pose(-10.0))]).unwrap()
    }

    #[test]
    fn sampling_boundaries_and_midpoints() {
        let t = traj();
        assert_eq!(sample_trajectory(&t, 0.0), pose(0.0));
        assert_eq!(sample_trajectory(&t, -1.0), pose(0.0));
        assert_eq!(sample_trajectory(&t, 0.5), pose(0.0).lerp(&pose(10.0), 0.5));
        assert_eq!(sample_trajectory(&t, 0.5)[0], 5.0);
        assert_eq!(sample_trajectory(&t, 1.0), pose(10.0));
        assert_eq!(sample_trajectory(&t, 2.0)[0], 0.0);
        assert_eq!(sample_trajectory(&t, 3.5), pose(-10.0));
        assert_eq!(t.peak_speed(), 20.0);
    }

    #[test]
    fn trajectory_validation() {
        assert!(Trajectory::from_poses([(0.0, pose(0.0))]).is_err());
        assert!(Trajectory::from_poses([(0.1, pose(0.0)), (1.0, pose(1.0))]).is_err());
        assert!(Trajectory::from_poses([(0.0, pose(0.0)), (0.0, pose(1.0))]).is_err());
        assert!(Trajectory::from_json(r#"{"points":[{"t":0,"q":[0,0,0,0,0,0]}]}"#).is_err());
        assert!(Trajectory::from_json(r#"{"points":[{"t":0,"q":[0,0,0]},{"t":1,"q":[0,0,0]}]}"#).is_err());
        let ok = Trajectory::from_json(
            r#"{"points":[{"t":0.0,"q":[0,0,0,0,0,0]},{"t":2.0,"q":[1,2,3,4,5,6],"qd":[0,0,0,0,0,0]}]}"#,
        )
        .unwrap();
        assert_eq!(ok.duration(), 2.0);
        assert_eq!(Trajectory::from_json(&ok.to_json()).unwrap(), ok);
    }

    #[test]
    fn schedule_lookup() {
        let s = OverrideSchedule::from_json(
            r#"{"entries":[{"t":0.0,"ovr":0.1},{"t":3.0,"ovr":0.5},{"t":6.0,"ovr":1.0}]}"#,
        )
        .unwrap();
        assert_eq!(s.value_at(0.0), 0.1);
        assert_eq!(s.value_at(2.999), 0.1);
        assert_eq!(s.value_at(3.0), 0.5);
        assert_eq!(s.value_at(100.0), 1.0);
    }

    #[test]
    fn schedule_validation() {
        assert!(OverrideSchedule::constant(0.0).is_err());
        assert!(OverrideSchedule::constant(1.5).is_err());
        assert!(OverrideSchedule::constant(1.0).is_ok());
        assert!(OverrideSchedule::new(vec![OverrideEntry { t: 1.0, ovr: 0.5 }]).is_err());
        assert!(OverrideSchedule::new(vec![
            OverrideEntry { t: 0.0, ovr: 0.5 },
            OverrideEntry { t: 2.0, ovr: 0.5 },
            OverrideEntry { t: 1.0, ovr: 0.5 },
        ])
        .is_err());
    }
}
