//! Joint-space pose and state types shared by every module.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of axes on a CRX arm.
pub const NUM_JOINTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PoseError {
    #[error("pose must have exactly {NUM_JOINTS} values, got {0}")]
    WrongLength(usize),
    #[error("joint {joint} is not finite ({value})")]
    NonFinite { joint: usize, value: f64 },
}

/// Six joint angles in degrees. Always finite.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct JointPose([f64; NUM_JOINTS]);

impl JointPose {
    pub const ZERO: JointPose = JointPose([0.0; NUM_JOINTS]);

    pub fn new(angles: [f64; NUM_JOINTS]) -> Result<Self, PoseError> {
        for (joint, &value) in angles.iter().enumerate() {
            if !value.is_finite() {
                return Err(PoseError::NonFinite { joint, value });
            }
        }
        Ok(Self(angles))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, PoseError> {
        let angles: [f64; NUM_JOINTS] = values
            .try_into()
            .map_err(|_| PoseError::WrongLength(values.len()))?;
        Self::new(angles)
    }

    /// Pose with every joint at zero except `joint` (0-based).
    pub fn single_joint(joint: usize, value: f64) -> Result<Self, PoseError> {
        let mut angles = [0.0; NUM_JOINTS];
        angles[joint] = value;
        Self::new(angles)
    }

    pub fn angles(&self) -> &[f64; NUM_JOINTS] {
        &self.0
    }

    pub fn with_joint(mut self, joint: usize, value: f64) -> Result<Self, PoseError> {
        self.0[joint] = value;
        Self::new(self.0)
    }

    /// Largest absolute per-joint difference.
    pub fn max_abs_diff(&self, other: &JointPose) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `self + (other - self) * frac`, joint by joint.
    pub fn lerp(&self, other: &JointPose, frac: f64) -> JointPose {
        let mut out = [0.0; NUM_JOINTS];
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.0[j] + (other.0[j] - self.0[j]) * frac;
        }
        JointPose(out)
    }
}

impl Index<usize> for JointPose {
    type Output = f64;

    fn index(&self, joint: usize) -> &f64 {
        &self.0[joint]
    }
}

impl TryFrom<Vec<f64>> for JointPose {
    type Error = PoseError;

    fn try_from(values: Vec<f64>) -> Result<Self, PoseError> {
        Self::from_slice(&values)
    }
}

impl<'de> Deserialize<'de> for JointPose {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        JointPose::from_slice(&values).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for JointPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (j, v) in self.0.iter().enumerate() {
            if j > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.3}")?;
        }
        write!(f, "]")
    }
}

/// Position, velocity and simulation time of the arm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    /// Simulation time, s.
    pub t: f64,
    /// Positions, deg.
    pub q: JointPose,
    /// Velocities, deg/s.
    pub qd: [f64; NUM_JOINTS],
}

impl JointState {
    pub fn at_rest(t: f64, q: JointPose) -> Self {
        Self {
            t,
            q,
            qd: [0.0; NUM_JOINTS],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_wrong_length() {
        assert!(matches!(
            JointPose::new([0.0, 0.0, f64::NAN, 0.0, 0.0, 0.0]),
            Err(PoseError::NonFinite { joint: 2, .. })
        ));
        assert_eq!(
            JointPose::from_slice(&[1.0, 2.0]),
            Err(PoseError::WrongLength(2))
        );
        assert!(JointPose::new([f64::INFINITY; 6]).is_err());
    }

    #[test]
    fn json_round_trip_enforces_length() {
        let pose: JointPose = serde_json::from_str("[1,2,3,4,5,6]").unwrap();
        assert_eq!(pose[5], 6.0);
        assert_eq!(serde_json::to_string(&pose).unwrap(), "[1.0,2.0,3.0,4.0,5.0,6.0]");
        assert!(serde_json::from_str::<JointPose>("[1,2,3]").is_err());
    }

    #[test]
    fn lerp_midpoint_is_mean() {
        let a = JointPose::new([0.0, 10.0, -4.0, 1.0, 2.0, 3.0]).unwrap();
        let b = JointPose::new([2.0, 20.0, 4.0, 1.0, 4.0, 9.0]).unwrap();
        let mid = a.lerp(&b, 0.5);
        assert_eq!(mid.angles(), &[1.0, 15.0, 0.0, 1.0, 3.0, 6.0]);
        assert_eq!(a.max_abs_diff(&b), 10.0);
    }
}
