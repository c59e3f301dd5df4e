use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use super::frame::{
    decode_response, decode_state, encode_frame, get_f64s, Decoded, FrameError, Opcode, Request,
    Response, Status,
};
use super::registers::SharedRegisters;
use super::server::{process_buffer, SessionStep, StateProvider};
use crate::pose::{JointPose, JointState, NUM_JOINTS};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(500);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] io::Error),
    #[error("request timed out")]
    Timeout,
    #[error("connection closed by peer")]
    Closed,
    #[error("{opcode:?} rejected with {status:?}")]
    Status { opcode: Opcode, status: Status },
    #[error("protocol: {0}")]
    Protocol(#[from] FrameError),
    #[error("reply does not match request: {0}")]
    Mismatch(&'static str),
    #[error("pose rejected locally: {0}")]
    Pose(#[from] crate::pose::PoseError),
}

impl ClientError {
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            ClientError::Transport(_) | ClientError::Timeout | ClientError::Closed
        )
    }
}

/// Request/response access to a register server. Typed helpers are
/// provided on top of [`RegisterLink::exchange`].
pub trait RegisterLink {
    /// Sends one request and waits for its reply.
    fn exchange(&mut self, request: &Request) -> Result<Response, ClientError>;

    fn read_r(&mut self, index: u16) -> Result<i32, ClientError> {
        let p = ok_payload(self.exchange(&Request::ReadR(index))?, Opcode::ReadR)?;
        Ok(i32::from_le_bytes([p[0], p[1], p[2], p[3]]))
    }

    fn write_r(&mut self, index: u16, value: i32) -> Result<(), ClientError> {
        ok_payload(self.exchange(&Request::WriteR(index, value))?, Opcode::WriteR).map(drop)
    }

    fn read_pr(&mut self, index: u16) -> Result<JointPose, ClientError> {
        let p = ok_payload(self.exchange(&Request::ReadPr(index))?, Opcode::ReadPr)?;
        Ok(JointPose::new(get_f64s::<NUM_JOINTS>(&p))?)
    }

    fn write_pr(&mut self, index: u16, pose: &JointPose) -> Result<(), ClientError> {
        let req = Request::WritePr(index, *pose.angles());
        ok_payload(self.exchange(&req)?, Opcode::WritePr).map(drop)
    }

    fn read_di(&mut self, index: u16) -> Result<bool, ClientError> {
        let p = ok_payload(self.exchange(&Request::ReadDi(index))?, Opcode::ReadDi)?;
        Ok(p[0] != 0)
    }

    fn write_di(&mut self, index: u16, value: bool) -> Result<(), ClientError> {
        ok_payload(self.exchange(&Request::WriteDi(index, value))?, Opcode::WriteDi).map(drop)
    }

    fn read_state(&mut self) -> Result<JointState, ClientError> {
        let p = ok_payload(self.exchange(&Request::ReadState)?, Opcode::ReadState)?;
        Ok(decode_state(&p)?)
    }
}

fn ok_payload(resp: Response, opcode: Opcode) -> Result<Vec<u8>, ClientError> {
    if resp.opcode != opcode as u8 {
        return Err(ClientError::Mismatch("opcode echo"));
    }
    if resp.status != Status::Ok {
        return Err(ClientError::Status {
            opcode,
            status: resp.status,
        });
    }
    if resp.payload.len() != opcode.response_len() {
        return Err(ClientError::Mismatch("payload length"));
    }
    Ok(resp.payload)
}

/// Blocking TCP client.
#[derive(Debug)]
pub struct RegisterClient {
    stream: TcpStream,
    buf: Vec<u8>,
}

impl RegisterClient {
    pub fn connect<A: ToSocketAddrs>(endpoint: A, timeout: Duration) -> Result<Self, ClientError> {
        let mut last_err = None;
        for addr in endpoint.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(stream) => {
                    stream.set_nodelay(true)?;
                    stream.set_read_timeout(Some(timeout))?;
                    stream.set_write_timeout(Some(timeout))?;
                    return Ok(Self {
                        stream,
                        buf: Vec::with_capacity(128),
                    });
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err
            .map(ClientError::Transport)
            .unwrap_or(ClientError::Closed))
    }

    pub fn set_timeout(&mut self, timeout: Duration) -> Result<(), ClientError> {
        self.stream.set_read_timeout(Some(timeout))?;
        self.stream.set_write_timeout(Some(timeout))?;
        Ok(())
    }
}

impl RegisterLink for RegisterClient {
    fn exchange(&mut self, request: &Request) -> Result<Response, ClientError> {
        let bytes = encode_frame(&request.to_frame())?;
        self.stream.write_all(&bytes).map_err(map_io)?;
        let mut chunk = [0u8; 256];
        loop {
            if let Decoded::Complete(resp, used) = decode_response(&self.buf)? {
                self.buf.drain(..used);
                return Ok(resp);
            }
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(ClientError::Closed),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e) => return Err(map_io(e)),
            }
        }
    }
}

fn map_io(e: io::Error) -> ClientError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => ClientError::Timeout,
        _ => ClientError::Transport(e),
    }
}

/// Link that runs requests through the wire codec and dispatcher without
/// a socket. Used for the deterministic embedded mode.
pub struct LoopbackLink<S> {
    registers: SharedRegisters,
    state: S,
    closed: bool,
}

impl<S: StateProvider> LoopbackLink<S> {
    pub fn new(registers: SharedRegisters, state: S) -> Self {
        Self {
            registers,
            state,
            closed: false,
        }
    }

    pub fn state_provider(&self) -> &S {
        &self.state
    }
}

impl<S: StateProvider> RegisterLink for LoopbackLink<S> {
    fn exchange(&mut self, request: &Request) -> Result<Response, ClientError> {
        if self.closed {
            return Err(ClientError::Closed);
        }
        let mut inbound = encode_frame(&request.to_frame())?;
        let mut outbound = Vec::new();
        if process_buffer(&mut inbound, &mut outbound, &self.registers, &self.state)
            == SessionStep::Close
        {
            self.closed = true;
        }
        match decode_response(&outbound)? {
            Decoded::Complete(resp, _) => Ok(resp),
            Decoded::NeedMore => Err(ClientError::Closed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regproto::server::StateMailbox;

    #[test]
    fn loopback_typed_helpers() {
        let mut link = LoopbackLink::new(SharedRegisters::default(), StateMailbox::default());
        link.write_r(1, 1).unwrap();
        assert_eq!(link.read_r(1).unwrap(), 1);
        assert_eq!(link.read_r(5).unwrap(), 0);
        let pose = JointPose::new([10.0, 20.0, 30.0, -40.0, 50.0, 60.5]).unwrap();
        link.write_pr(1, &pose).unwrap();
        assert_eq!(link.read_pr(1).unwrap(), pose);
        link.write_di(7, true).unwrap();
        assert!(link.read_di(7).unwrap());
        assert_eq!(link.read_state().unwrap(), JointState::default());
    }

    #[test]
    fn status_errors_are_typed() {
        let mut link = LoopbackLink::new(SharedRegisters::default(), StateMailbox::default());
        match link.write_r(0, 1) {
            Err(ClientError::Status { opcode, status }) => {
                assert_eq!(opcode, Opcode::WriteR);
                assert_eq!(status, Status::BadIndex);
            }
            other => panic!("expected BadIndex, got {other:?}"),
        }
        // link still usable after a rejected request
        assert_eq!(link.read_r(1).unwrap(), 0);
    }
}
