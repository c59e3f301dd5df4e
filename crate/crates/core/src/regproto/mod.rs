//! Register exchange protocol.
//!
//! A controller exposes three register banks (numeric R, joint-space
//! position PR, digital DI) and a live joint state. Clients read and write
//! them with small fixed-schema frames over TCP.

mod client;
mod frame;
mod registers;
mod server;

pub use client::{ClientError, LoopbackLink, RegisterClient, RegisterLink, DEFAULT_TIMEOUT};
pub use frame::{
    decode_frame, decode_response, decode_state, encode_frame, encode_response, encode_state,
    Decoded, Frame, FrameError, Opcode, Request, Response, Status, MAGIC, PR_PAYLOAD_LEN,
    REQUEST_HEADER_LEN, RESPONSE_BIT, RESPONSE_HEADER_LEN, STATE_PAYLOAD_LEN, VERSION,
};
pub use registers::{Bank, BadIndex, RegisterFile, SharedRegisters, DI_COUNT, PR_COUNT, R_COUNT};
pub use server::{dispatch, serve, ServerHandle, StateMailbox, StateProvider};

/// Default TCP port, the EtherNet/IP explicit messaging port.
pub const DEFAULT_PORT: u16 = 44818;

/// R[1]: motion enable handshake.
pub const R_MOTION_ENABLE: u16 = 1;
/// R[2]: gripper command, 1 = close.
pub const R_GRIPPER: u16 = 2;
/// PR[1]: streamed joint target.
pub const PR_TARGET: u16 = 1;
/// DI[1]: gripper closed.
pub const DI_GRIPPER_CLOSED: u16 = 1;
