use std::net::ToSocketAddrs;
use std::thread;
use std::time::{Duration, Instant};

use crate::emulator::Emulator;
use crate::regproto::{ClientError, LoopbackLink, RegisterClient, RegisterLink, Request, Response, StateMailbox};

/// A register link plus the clock that paces the control loop.
pub trait ControllerSession: RegisterLink {
    /// Seconds on this session's clock.
    fn now(&mut self) -> f64;

    /// Blocks (or simulates) until `now() >= t`. Returns immediately when
    /// already late.
    fn wait_until(&mut self, t: f64) -> Result<(), ClientError>;
}

/// In-process session on a virtual clock. Waiting steps the emulator, so a
/// run is a pure function of its inputs.
pub struct EmbeddedSession {
    emulator: Emulator,
    link: LoopbackLink<StateMailbox>,
}

impl EmbeddedSession {
    pub fn new(emulator: Emulator) -> Self {
        let link = emulator.loopback();
        Self { emulator, link }
    }

    pub fn emulator(&self) -> &Emulator {
        &self.emulator
    }

    pub fn emulator_mut(&mut self) -> &mut Emulator {
        &mut self.emulator
    }

    pub fn into_emulator(self) -> Emulator {
        self.emulator
    }
}

impl RegisterLink for EmbeddedSession {
    fn exchange(&mut self, request: &Request) -> Result<Response, ClientError> {
        self.link.exchange(request)
    }
}

impl ControllerSession for EmbeddedSession {
    fn now(&mut self) -> f64 {
        self.emulator.time()
    }

    fn wait_until(&mut self, t: f64) -> Result<(), ClientError> {
        self.emulator.advance_to(t);
        Ok(())
    }
}

/// TCP session paced by the wall clock.
pub struct TcpSession {
    client: RegisterClient,
    origin: Instant,
}

impl TcpSession {
    pub fn connect<A: ToSocketAddrs>(endpoint: A, timeout: Duration) -> Result<Self, ClientError> {
        Ok(Self {
            client: RegisterClient::connect(endpoint, timeout)?,
            origin: Instant::now(),
        })
    }
}

impl RegisterLink for TcpSession {
    fn exchange(&mut self, request: &Request) -> Result<Response, ClientError> {
        self.client.exchange(request)
    }
}

impl ControllerSession for TcpSession {
    fn now(&mut self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    fn wait_until(&mut self, t: f64) -> Result<(), ClientError> {
        let remaining = t - self.now();
        if remaining > 0.0 {
            thread::sleep(Duration::from_secs_f64(remaining));
        }
        Ok(())
    }
}
