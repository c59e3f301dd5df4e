use std::io;
use std::net::{SocketAddr, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{ClockMode, ConfigError, Emulator, EmulatorConfig};
use crate::regproto::{serve, ServerHandle, SharedRegisters, StateMailbox};

#[derive(Debug, Error)]
pub enum EmulatorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {endpoint}: {source}")]
    Bind { endpoint: String, source: io::Error },
    #[error("cannot start motion thread: {0}")]
    Spawn(io::Error),
}

/// Emulator ticking against the wall clock on its own thread.
pub struct RealtimeEmulator {
    registers: SharedRegisters,
    mailbox: StateMailbox,
    ticks: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Emulator>>,
    server: Option<ServerHandle>,
    tick_rate: f64,
}

impl RealtimeEmulator {
    pub fn start(config: EmulatorConfig) -> Result<Self, EmulatorError> {
        let tick_rate = config.tick_rate;
        let mut emu = Emulator::new(config)?;
        let registers = emu.registers().clone();
        let mailbox = emu.mailbox().clone();
        let ticks = Arc::new(AtomicU64::new(0));
        let stop = Arc::new(AtomicBool::new(false));

        let thread_ticks = Arc::clone(&ticks);
        let thread_stop = Arc::clone(&stop);
        let period = Duration::from_secs_f64(1.0 / tick_rate);
        let thread = thread::Builder::new()
            .name("crx-motion".into())
            .spawn(move || {
                let start = Instant::now();
                let mut n: u32 = 0;
                while !thread_stop.load(Ordering::SeqCst) {
                    n += 1;
                    // fixed deadlines; a late tick does not shift later ones
                    let deadline = start + period * n;
                    let now = Instant::now();
                    if deadline > now {
                        thread::sleep(deadline - now);
                    }
                    emu.tick();
                    thread_ticks.store(emu.ticks(), Ordering::SeqCst);
                }
                emu
            })
            .map_err(EmulatorError::Spawn)?;

        Ok(Self {
            registers,
            mailbox,
            ticks,
            stop,
            thread: Some(thread),
            server: None,
            tick_rate,
        })
    }

    /// Starts a protocol server on `endpoint` backed by this emulator.
    pub fn serve<A: ToSocketAddrs + ToString>(&mut self, endpoint: A) -> Result<SocketAddr, EmulatorError> {
        let label = endpoint.to_string();
        let server = serve(
            self.registers.clone(),
            Arc::new(self.mailbox.clone()),
            endpoint,
        )
        .map_err(|source| EmulatorError::Bind {
            endpoint: label,
            source,
        })?;
        let addr = server.local_addr();
        self.server = Some(server);
        Ok(addr)
    }

    pub fn registers(&self) -> &SharedRegisters {
        &self.registers
    }

    pub fn mailbox(&self) -> &StateMailbox {
        &self.mailbox
    }

    pub fn ticks(&self) -> u64 {
        self.ticks.load(Ordering::SeqCst)
    }

    pub fn tick_rate(&self) -> f64 {
        self.tick_rate
    }

    /// Stops the motion loop and server; returns the emulator for inspection.
    pub fn stop(mut self) -> Emulator {
        self.halt().expect("motion thread present until stopped")
    }

    fn halt(&mut self) -> Option<Emulator> {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(server) = self.server.take() {
            server.shutdown();
        }
        self.thread.take().and_then(|t| t.join().ok())
    }
}

impl Drop for RealtimeEmulator {
    fn drop(&mut self) {
        self.halt();
    }
}

/// A started emulator in either clock mode.
pub enum EmulatorHandle {
    /// Caller-stepped, fully deterministic.
    Virtual(Emulator),
    Realtime(RealtimeEmulator),
}

impl EmulatorHandle {
    pub fn registers(&self) -> &SharedRegisters {
        match self {
            EmulatorHandle::Virtual(e) => e.registers(),
            EmulatorHandle::Realtime(e) => e.registers(),
        }
    }
}

/// Starts an emulator in the clock mode named by `config.clock_mode`.
pub fn run(config: EmulatorConfig) -> Result<EmulatorHandle, EmulatorError> {
    Ok(match config.clock_mode {
        ClockMode::Virtual => EmulatorHandle::Virtual(Emulator::new(config)?),
        ClockMode::Realtime => EmulatorHandle::Realtime(RealtimeEmulator::start(config)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_picks_clock_mode() {
        let cfg = EmulatorConfig::default();
        assert!(matches!(run(cfg.clone()), Ok(EmulatorHandle::Virtual(_))));
        let mut bad = cfg.clone();
        bad.vmax.0[0] = -1.0;
        assert!(matches!(run(bad), Err(EmulatorError::Config(_))));
    }

    #[test]
    fn bind_failure_is_reported() {
        let mut first = RealtimeEmulator::start(EmulatorConfig::default()).unwrap();
        let addr = first.serve("127.0.0.1:0").unwrap();
        let mut second = RealtimeEmulator::start(EmulatorConfig::default()).unwrap();
        assert!(matches!(
            second.serve(addr.to_string()),
            Err(EmulatorError::Bind { .. })
        ));
        first.stop();
        second.stop();
    }
}
