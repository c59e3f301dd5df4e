//! Streaming joint-position control of a register-driven robot controller.
//!
//! * [`regproto`]: R / PR / DI register banks and the framed TCP protocol.
//! * [`emulator`]: controller emulation, the motion program state machine
//!   and a rate-limited joint servo behind configurable latency.
//! * [`stream`]: client-side interface, handshake, fixed-rate target
//!   streaming and speed-override trajectory execution.
//! * [`metrics`]: step response, tracking error, cross-correlation lag.
//! * [`harness`]: experiment runner and parameter calibration.

pub mod emulator;
pub mod harness;
pub mod metrics;
pub mod pose;
pub mod regproto;
pub mod stream;

pub use pose::{JointPose, JointState, PoseError, NUM_JOINTS};
