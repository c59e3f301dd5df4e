use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, warn};

use super::frame::{
    decode_frame, encode_response, encode_state, put_f64s, Decoded, Frame, FrameError, Request,
    Response, Status,
};
use super::registers::SharedRegisters;
use crate::pose::{JointPose, JointState};

/// Source of the robot state reported by READ_STATE.
pub trait StateProvider: Send + Sync {
    fn current_state(&self) -> JointState;
}

/// Single-writer snapshot of the latest visible state.
#[derive(Debug, Clone, Default)]
pub struct StateMailbox(Arc<Mutex<JointState>>);

impl StateMailbox {
    pub fn new(initial: JointState) -> Self {
        Self(Arc::new(Mutex::new(initial)))
    }

    pub fn publish(&self, state: JointState) {
        *self.0.lock().unwrap_or_else(|e| e.into_inner()) = state;
    }
}

impl StateProvider for StateMailbox {
    fn current_state(&self) -> JointState {
        *self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Applies one request to the register file and builds the reply.
pub fn dispatch(frame: &Frame, registers: &SharedRegisters, state: &dyn StateProvider) -> Response {
    let op = frame.opcode;
    let request = match Request::from_frame(frame) {
        Ok(req) => req,
        Err(err) => return Response::error(op as u8, err.status()),
    };
    let bad_index = |_| Response::error(op as u8, Status::BadIndex);
    match request {
        Request::ReadR(i) => registers
            .lock()
            .r(i)
            .map_or_else(bad_index, |v| Response::ok(op, v.to_le_bytes().to_vec())),
        Request::WriteR(i, v) => registers
            .lock()
            .set_r(i, v)
            .map_or_else(bad_index, |_| Response::ok(op, Vec::new())),
        Request::ReadPr(i) => registers
            .lock()
            .pr(i)
            .map_or_else(bad_index, |p| Response::ok(op, put_f64s(p.angles()))),
        Request::WritePr(i, angles) => match JointPose::new(angles) {
            Ok(pose) => registers
                .lock()
                .set_pr(i, pose)
                .map_or_else(bad_index, |_| Response::ok(op, Vec::new())),
            Err(_) => Response::error(op as u8, Status::Malformed),
        },
        Request::ReadDi(i) => registers
            .lock()
            .di(i)
            .map_or_else(bad_index, |v| Response::ok(op, vec![v as u8])),
        Request::WriteDi(i, v) => registers
            .lock()
            .set_di(i, v)
            .map_or_else(bad_index, |_| Response::ok(op, Vec::new())),
        Request::ReadState => Response::ok(op, encode_state(&state.current_state())),
    }
}

/// Outcome of processing whatever is buffered for one session.
#[derive(Debug, PartialEq)]
pub(crate) enum SessionStep {
    Continue,
    Close,
}

/// Decodes and answers every complete frame in `buf`, appending replies
/// to `out`. Consumed bytes are drained from `buf`.
pub(crate) fn process_buffer(
    buf: &mut Vec<u8>,
    out: &mut Vec<u8>,
    registers: &SharedRegisters,
    state: &dyn StateProvider,
) -> SessionStep {
    loop {
        match decode_frame(buf) {
            Ok(Decoded::NeedMore) => return SessionStep::Continue,
            Ok(Decoded::Complete(frame, used)) => {
                let resp = dispatch(&frame, registers, state);
                out.extend(encode_response(&resp).expect("fixed-size payload"));
                buf.drain(..used);
            }
            Err(FrameError::BadOpcode { opcode, consumed }) => {
                out.extend(
                    encode_response(&Response::error(opcode, Status::BadOpcode))
                        .expect("empty payload"),
                );
                buf.drain(..consumed);
            }
            Err(err) => {
                debug!("closing session: {err}");
                let opcode = buf.get(3).copied().unwrap_or(0) & 0x7F;
                out.extend(
                    encode_response(&Response::error(opcode, Status::Malformed))
                        .expect("empty payload"),
                );
                buf.clear();
                return SessionStep::Close;
            }
        }
    }
}

/// Handle to a running protocol server. Dropping it stops the server.
pub struct ServerHandle {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_inner();
    }
}

const POLL: Duration = Duration::from_millis(20);

/// Binds `endpoint` and serves register requests on background threads,
/// one thread per session.
pub fn serve<A: ToSocketAddrs>(
    registers: SharedRegisters,
    state: Arc<dyn StateProvider>,
    endpoint: A,
) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(endpoint)?;
    listener.set_nonblocking(true)?;
    let local_addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));

    let accept_stop = Arc::clone(&stop);
    let accept_thread = thread::Builder::new()
        .name("regproto-accept".into())
        .spawn(move || {
            let mut sessions = Vec::new();
            while !accept_stop.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        debug!("session from {peer}");
                        let regs = registers.clone();
                        let state = Arc::clone(&state);
                        let stop = Arc::clone(&accept_stop);
                        sessions.push(thread::spawn(move || {
                            if let Err(err) = run_session(stream, &regs, state.as_ref(), &stop) {
                                debug!("session {peer} ended: {err}");
                            }
                        }));
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                    Err(e) => {
                        warn!("accept failed: {e}");
                        thread::sleep(POLL);
                    }
                }
                sessions.retain(|s: &JoinHandle<()>| !s.is_finished());
            }
            for s in sessions {
                let _ = s.join();
            }
        })?;

    Ok(ServerHandle {
        local_addr,
        stop,
        accept_thread: Some(accept_thread),
    })
}

fn run_session(
    mut stream: TcpStream,
    registers: &SharedRegisters,
    state: &dyn StateProvider,
    stop: &AtomicBool,
) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(POLL))?;
    let mut buf = Vec::with_capacity(256);
    let mut out = Vec::with_capacity(256);
    let mut chunk = [0u8; 1024];
    while !stop.load(Ordering::SeqCst) {
        let n = match stream.read(&mut chunk) {
            Ok(0) => return Ok(()),
            Ok(n) => n,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                continue
            }
            Err(e) => return Err(e),
        };
        buf.extend_from_slice(&chunk[..n]);
        let step = process_buffer(&mut buf, &mut out, registers, state);
        if !out.is_empty() {
            stream.write_all(&out)?;
            out.clear();
        }
        if step == SessionStep::Close {
            let _ = stream.shutdown(std::net::Shutdown::Both);
            return Ok(());
        }
    }
    Ok(())
}
