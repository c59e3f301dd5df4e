use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{JointPose, NUM_JOINTS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// A per-joint parameter. In JSON either one number for all joints or an
/// array of six.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PerJointRepr", into = "PerJointRepr")]
pub struct PerJoint(pub [f64; NUM_JOINTS]);

impl PerJoint {
    pub const fn uniform(value: f64) -> Self {
        PerJoint([value; NUM_JOINTS])
    }

    pub fn get(&self, joint: usize) -> f64 {
        self.0[joint]
    }

    fn is_uniform(&self) -> bool {
        self.0.iter().all(|v| v.to_bits() == self.0[0].to_bits())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PerJointRepr {
    Scalar(f64),
    Array([f64; NUM_JOINTS]),
}

impl From<PerJointRepr> for PerJoint {
    fn from(r: PerJointRepr) -> Self {
        match r {
            PerJointRepr::Scalar(v) => PerJoint::uniform(v),
            PerJointRepr::Array(a) => PerJoint(a),
        }
    }
}

impl From<PerJoint> for PerJointRepr {
    fn from(p: PerJoint) -> Self {
        if p.is_uniform() {
            PerJointRepr::Scalar(p.0[0])
        } else {
            PerJointRepr::Array(p.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Stepped by the caller; bit-reproducible.
    #[default]
    Virtual,
    /// Self-ticking against the wall clock.
    Realtime,
}

/// Calibrated servo parameters, as shipped in `assets/emulator_default.json`.
pub const DEFAULT_KP: f64 = 8.9375;
pub const DEFAULT_VMAX: f64 = 57.5;
pub const DEFAULT_AMAX: f64 = 800.0;
pub const DEFAULT_COMMAND_LATENCY: f64 = 0.145;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmulatorConfig {
    /// Proportional gain, 1/s.
    pub kp: PerJoint,
    /// Joint velocity limit, deg/s.
    pub vmax: PerJoint,
    /// Joint acceleration limit, deg/s².
    pub amax: PerJoint,
    /// Delay before a register write reaches the motion program, s.
    pub command_latency: f64,
    /// Delay before the arm state is visible to READ_STATE, s.
    #[serde(default)]
    pub feedback_latency: f64,
    /// Motion loop rate, Hz.
    pub tick_rate: f64,
    #[serde(default)]
    pub home_pose: JointPose,
    #[serde(default)]
    pub clock_mode: ClockMode,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        Self {
            kp: PerJoint::uniform(DEFAULT_KP),
            vmax: PerJoint::uniform(DEFAULT_VMAX),
            amax: PerJoint::uniform(DEFAULT_AMAX),
            command_latency: DEFAULT_COMMAND_LATENCY,
            feedback_latency: 0.0,
            tick_rate: 250.0,
            home_pose: JointPose::ZERO,
            clock_mode: ClockMode::Virtual,
        }
    }
}

impl EmulatorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, p: &PerJoint| {
            match p.0.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                Some(j) => Err(ConfigError::Invalid(format!(
                    "{name}[{j}] must be finite and > 0, got {}",
                    p.0[j]
                ))),
                None => Ok(()),
            }
        };
        positive("kp", &self.kp)?;
        positive("vmax", &self.vmax)?;
        positive("amax", &self.amax)?;
        if !(self.tick_rate.is_finite() && self.tick_rate > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "tick_rate must be > 0, got {}",
                self.tick_rate
            )));
        }
        for (name, v) in [
            ("command_latency", self.command_latency),
            ("feedback_latency", self.feedback_latency),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn tick_period(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: EmulatorConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_asset_matches_default() {
        let shipped = EmulatorConfig::from_json(include_str!("../../assets/emulator_default.json"))
            .unwrap();
        assert_eq!(shipped, EmulatorConfig::default());
    }

    #[test]
    fn scalar_or_array_per_joint() {
        let cfg = EmulatorConfig::from_json(
            r#"{"kp": 5.0, "vmax": [60, 60, 70, 80, 90, 100], "amax": 300,
                "command_latency": 0.2, "tick_rate": 250}"#,
        )
        .unwrap();
        assert_eq!(cfg.kp, PerJoint::uniform(5.0));
        assert_eq!(cfg.vmax.get(5), 100.0);
        assert_eq!(cfg.home_pose, JointPose::ZERO);
        assert_eq!(cfg.clock_mode, ClockMode::Virtual);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = EmulatorConfig::default();
        cfg.kp.0[3] = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EmulatorConfig::default();
        cfg.command_latency = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = EmulatorConfig::default();
        cfg.tick_rate = f64::NAN;
        assert!(cfg.validate().is_err());
        assert!(EmulatorConfig::from_json("{ not json").is_err());
        assert!(EmulatorConfig::from_json(r#"{"kp": 1}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = EmulatorConfig::default();
        cfg.vmax.0[2] = 75.0;
        cfg.clock_mode = ClockMode::Realtime;
        assert_eq!(EmulatorConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
