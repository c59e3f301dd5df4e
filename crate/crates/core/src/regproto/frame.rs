//! Wire format.
//!
//! Request:  `magic:u16 | version:u8 | opcode:u8 | index:u16 | payload_len:u16 | payload`
//! Response: `magic:u16 | version:u8 | opcode|0x80:u8 | status:u8 | payload_len:u16 | payload`
//!
//! All multi-byte fields are little-endian.

use thiserror::Error;

use crate::pose::{JointPose, JointState, NUM_JOINTS};

pub const MAGIC: u16 = 0xFA2C;
pub const VERSION: u8 = 0x01;
pub const RESPONSE_BIT: u8 = 0x80;

pub const REQUEST_HEADER_LEN: usize = 8;
pub const RESPONSE_HEADER_LEN: usize = 7;

pub const PR_PAYLOAD_LEN: usize = NUM_JOINTS * 8;
/// `sim_time_s` + 6 positions + 6 velocities, all f64.
pub const STATE_PAYLOAD_LEN: usize = 8 + 2 * NUM_JOINTS * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    ReadR = 0x01,
    WriteR = 0x02,
    ReadPr = 0x03,
    WritePr = 0x04,
    ReadDi = 0x05,
    WriteDi = 0x06,
    ReadState = 0x07,
}

impl Opcode {
    pub const ALL: [Opcode; 7] = [
        Opcode::ReadR,
        Opcode::WriteR,
        Opcode::ReadPr,
        Opcode::WritePr,
        Opcode::ReadDi,
        Opcode::WriteDi,
        Opcode::ReadState,
    ];

    pub fn from_u8(byte: u8) -> Option<Opcode> {
        Self::ALL.into_iter().find(|op| *op as u8 == byte)
    }

    /// Fixed request payload size.
    pub fn request_len(self) -> usize {
        match self {
            Opcode::WriteR => 4,
            Opcode::WritePr => PR_PAYLOAD_LEN,
            Opcode::WriteDi => 1,
            Opcode::ReadR | Opcode::ReadPr | Opcode::ReadDi | Opcode::ReadState => 0,
        }
    }

    /// Fixed payload size of an OK response.
    pub fn response_len(self) -> usize {
        match self {
            Opcode::ReadR => 4,
            Opcode::ReadPr => PR_PAYLOAD_LEN,
            Opcode::ReadDi => 1,
            Opcode::ReadState => STATE_PAYLOAD_LEN,
            Opcode::WriteR | Opcode::WritePr | Opcode::WriteDi => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    BadIndex = 1,
    BadOpcode = 2,
    Malformed = 3,
}

impl Status {
    pub fn from_u8(byte: u8) -> Option<Status> {
        match byte {
            0 => Some(Status::Ok),
            1 => Some(Status::BadIndex),
            2 => Some(Status::BadOpcode),
            3 => Some(Status::Malformed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("payload length {actual} does not match the {expected}-byte schema of {opcode:?}")]
    PayloadLength {
        opcode: Opcode,
        expected: usize,
        actual: usize,
    },
    #[error("payload of {0} bytes does not fit a u16 length field")]
    PayloadTooLarge(usize),
    #[error("malformed frame: {0}")]
    Malformed(&'static str),
    /// Opcode byte not in the table. `consumed` is the full frame length so
    /// the stream can be resynchronised.
    #[error("unknown opcode 0x{opcode:02x}")]
    BadOpcode { opcode: u8, consumed: usize },
}

impl FrameError {
    pub fn status(&self) -> Status {
        match self {
            FrameError::BadOpcode { .. } => Status::BadOpcode,
            _ => Status::Malformed,
        }
    }
}

/// Result of feeding bytes to a decoder.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded<T> {
    /// A complete item and the number of bytes it occupied.
    Complete(T, usize),
    /// The buffer holds a valid but incomplete prefix.
    NeedMore,
}

/// A request frame. Magic and version are implicit constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: Opcode,
    pub index: u16,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(opcode: Opcode, index: u16, payload: Vec<u8>) -> Self {
        Self {
            opcode,
            index,
            payload,
        }
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        let expected = self.opcode.request_len();
        if self.payload.len() != expected {
            return Err(FrameError::PayloadLength {
                opcode: self.opcode,
                expected,
                actual: self.payload.len(),
            });
        }
        Ok(())
    }
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    frame.validate()?;
    let mut out = Vec::with_capacity(REQUEST_HEADER_LEN + frame.payload.len());
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.push(VERSION);
    out.push(frame.opcode as u8);
    out.extend_from_slice(&frame.index.to_le_bytes());
    out.extend_from_slice(&(frame.payload.len() as u16).to_le_bytes());
    out.extend_from_slice(&frame.payload);
    Ok(out)
}

fn check_preamble(bytes: &[u8]) -> Result<(), FrameError> {
    let magic = MAGIC.to_le_bytes();
    for (i, &b) in bytes.iter().take(2).enumerate() {
        if b != magic[i] {
            return Err(FrameError::Malformed("bad magic"));
        }
    }
    if bytes.len() > 2 && bytes[2] != VERSION {
        return Err(FrameError::Malformed("unsupported version"));
    }
    Ok(())
}

/// Decodes one request frame from the front of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Decoded<Frame>, FrameError> {
    check_preamble(bytes)?;
    if bytes.len() < REQUEST_HEADER_LEN {
        return Ok(Decoded::NeedMore);
    }
    let raw_opcode = bytes[3];
    let index = u16::from_le_bytes([bytes[4], bytes[5]]);
    let payload_len = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let total = REQUEST_HEADER_LEN + payload_len;

    let opcode = match Opcode::from_u8(raw_opcode) {
        Some(op) => op,
        None if bytes.len() < total => return Ok(Decoded::NeedMore),
        None => {
            return Err(FrameError::BadOpcode {
                opcode: raw_opcode,
                consumed: total,
            })
        }
    };
    if payload_len != opcode.request_len() {
        return Err(FrameError::PayloadLength {
            opcode,
            expected: opcode.request_len(),
            actual: payload_len,
        });
    }
    if bytes.len() < total {
        return Ok(Decoded::NeedMore);
    }
    let frame = Frame {
        opcode,
        index,
        payload: bytes[REQUEST_HEADER_LEN..total].to_vec(),
    };
    Ok(Decoded::Complete(frame, total))
}

/// A response frame. `opcode` is the raw request opcode (without the
/// response bit) so BAD_OPCODE replies can echo unknown values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub opcode: u8,
    pub status: Status,
    pub payload: Vec<u8>,
}

impl Response {
    pub fn ok(opcode: Opcode, payload: Vec<u8>) -> Self {
        Self {
            opcode: opcode as u8,
            status: Status::Ok,
            payload,
        }
    }

    pub fn error(opcode: u8, status: Status) -> Self {
        Self {
            opcode,
            status,
            payload: Vec::new(),
        }
    }
}

pub fn encode_response(resp: &Response) -> Result<Vec<u8>, FrameError> {
    if resp.payload.len() > u16::MAX as usize {
        return Err(FrameError::PayloadTooLarge(resp.payload.len()));
    }
    let mut out = Vec::with_capacity(RESPONSE_HEADER_LEN + resp.payload.len());
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.push(VERSION);
    out.push(resp.opcode | RESPONSE_BIT);
    out.push(resp.status as u8);
    out.extend_from_slice(&(resp.payload.len() as u16).to_le_bytes());
    out.extend_from_slice(&resp.payload);
    Ok(out)
}

pub fn decode_response(bytes: &[u8]) -> Result<Decoded<Response>, FrameError> {
    check_preamble(bytes)?;
    if bytes.len() < RESPONSE_HEADER_LEN {
        return Ok(Decoded::NeedMore);
    }
    if bytes[3] & RESPONSE_BIT == 0 {
        return Err(FrameError::Malformed("response bit not set"));
    }
    let status = Status::from_u8(bytes[4]).ok_or(FrameError::Malformed("unknown status"))?;
    let payload_len = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
    let total = RESPONSE_HEADER_LEN + payload_len;
    if bytes.len() < total {
        return Ok(Decoded::NeedMore);
    }
    let resp = Response {
        opcode: bytes[3] & !RESPONSE_BIT,
        status,
        payload: bytes[RESPONSE_HEADER_LEN..total].to_vec(),
    };
    Ok(Decoded::Complete(resp, total))
}

/// Typed view of a request frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Request {
    ReadR(u16),
    WriteR(u16, i32),
    ReadPr(u16),
    WritePr(u16, [f64; NUM_JOINTS]),
    ReadDi(u16),
    WriteDi(u16, bool),
    ReadState,
}

impl Request {
    pub fn opcode(&self) -> Opcode {
        match self {
            Request::ReadR(_) => Opcode::ReadR,
            Request::WriteR(..) => Opcode::WriteR,
            Request::ReadPr(_) => Opcode::ReadPr,
            Request::WritePr(..) => Opcode::WritePr,
            Request::ReadDi(_) => Opcode::ReadDi,
            Request::WriteDi(..) => Opcode::WriteDi,
            Request::ReadState => Opcode::ReadState,
        }
    }

    pub fn to_frame(&self) -> Frame {
        match *self {
            Request::ReadR(i) => Frame::new(Opcode::ReadR, i, Vec::new()),
            Request::WriteR(i, v) => Frame::new(Opcode::WriteR, i, v.to_le_bytes().to_vec()),
            Request::ReadPr(i) => Frame::new(Opcode::ReadPr, i, Vec::new()),
            Request::WritePr(i, ref angles) => Frame::new(Opcode::WritePr, i, put_f64s(angles)),
            Request::ReadDi(i) => Frame::new(Opcode::ReadDi, i, Vec::new()),
            Request::WriteDi(i, v) => Frame::new(Opcode::WriteDi, i, vec![v as u8]),
            Request::ReadState => Frame::new(Opcode::ReadState, 0, Vec::new()),
        }
    }

    /// Parses a schema-valid frame. Fails with `Malformed` on a DI byte
    /// other than 0/1. Non-finite PR values are passed through; the
    /// dispatcher rejects them.
    pub fn from_frame(frame: &Frame) -> Result<Request, FrameError> {
        frame.validate()?;
        let i = frame.index;
        let p = &frame.payload;
        Ok(match frame.opcode {
            Opcode::ReadR => Request::ReadR(i),
            Opcode::WriteR => Request::WriteR(i, i32::from_le_bytes([p[0], p[1], p[2], p[3]])),
            Opcode::ReadPr => Request::ReadPr(i),
            Opcode::WritePr => Request::WritePr(i, get_f64s::<NUM_JOINTS>(p)),
            Opcode::ReadDi => Request::ReadDi(i),
            Opcode::WriteDi => match p[0] {
                0 => Request::WriteDi(i, false),
                1 => Request::WriteDi(i, true),
                _ => return Err(FrameError::Malformed("DI payload must be 0 or 1")),
            },
            Opcode::ReadState => Request::ReadState,
        })
    }
}

pub(crate) fn put_f64s(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn get_f64s<const N: usize>(bytes: &[u8]) -> [f64; N] {
    let mut out = [0.0; N];
    for (o, chunk) in out.iter_mut().zip(bytes.chunks_exact(8)) {
        *o = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
    }
    out
}

pub fn encode_state(state: &JointState) -> Vec<u8> {
    let mut out = Vec::with_capacity(STATE_PAYLOAD_LEN);
    out.extend_from_slice(&state.t.to_le_bytes());
    out.extend(put_f64s(state.q.angles()));
    out.extend(put_f64s(&state.qd));
    out
}

pub fn decode_state(payload: &[u8]) -> Result<JointState, FrameError> {
    if payload.len() != STATE_PAYLOAD_LEN {
        return Err(FrameError::Malformed("state payload must be 104 bytes"));
    }
    let t = f64::from_le_bytes(payload[0..8].try_into().expect("8 bytes"));
    let q = get_f64s::<NUM_JOINTS>(&payload[8..8 + PR_PAYLOAD_LEN]);
    let qd = get_f64s::<NUM_JOINTS>(&payload[8 + PR_PAYLOAD_LEN..]);
    let q = JointPose::new(q).map_err(|_| FrameError::Malformed("non-finite state"))?;
    Ok(JointState { t, q, qd })
}
