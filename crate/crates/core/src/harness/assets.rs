//! Files shipped in `crates/core/assets`.

use crate::emulator::EmulatorConfig;
use crate::stream::{OverrideSchedule, Trajectory};

/// Calibrated emulator configuration.
pub const EMULATOR_DEFAULT: &str = include_str!("../../assets/emulator_default.json");
/// J1 from -45 to 45 deg in 3 s, other joints at zero.
pub const J1_SWING: &str = include_str!("../../assets/j1_swing.json");
/// Override 0.1 from 0 s, 0.5 from 3 s, 1.0 from 6 s.
pub const OVR_10_50_100: &str = include_str!("../../assets/ovr_10_50_100.json");
/// Synthetic 12 s six-joint path through four poses with quintic blends,
/// starting at the home pose.
pub const SIX_JOINT_PATH: &str = include_str!("../../assets/six_joint_path.json");

pub fn emulator_default() -> EmulatorConfig {
    EmulatorConfig::from_json(EMULATOR_DEFAULT).expect("bundled config is valid")
}

pub fn j1_swing() -> Trajectory {
    Trajectory::from_json(J1_SWING).expect("bundled trajectory is valid")
}

pub fn ovr_10_50_100() -> OverrideSchedule {
    OverrideSchedule::from_json(OVR_10_50_100).expect("bundled schedule is valid")
}

pub fn six_joint_path() -> Trajectory {
    Trajectory::from_json(SIX_JOINT_PATH).expect("bundled trajectory is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::JointPose;

    #[test]
    fn bundled_files_parse() {
        assert_eq!(emulator_default(), EmulatorConfig::default());
        let swing = j1_swing();
        assert_eq!(swing.start(), JointPose::single_joint(0, -45.0).unwrap());
        assert_eq!(swing.end(), JointPose::single_joint(0, 45.0).unwrap());
        assert_eq!(ovr_10_50_100().entries().len(), 3);
        let path = six_joint_path();
        assert_eq!(path.start(), JointPose::ZERO);
        assert!(path.peak_speed() < EmulatorConfig::default().vmax.get(0));
    }
}
