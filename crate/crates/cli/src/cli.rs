use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::info;

use crx_core::emulator::{Emulator, EmulatorConfig, RealtimeEmulator};
use crx_core::harness::{
    self, run_embedded, run_socket, CalibrationGrid, CalibrationTargets, Experiment, ExperimentSpec, HarnessError,
    RunOutput,
};
use crx_core::metrics::{analyze_log, AnalysisOptions};
use crx_core::regproto::DEFAULT_PORT;
use crx_core::stream::{ExperimentLog, OverrideSchedule, StreamError, Trajectory, DEFAULT_STREAM_RATE};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "crx", version, about = "Register-streaming controller emulator and experiment runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Controller emulator.
    Emu {
        #[command(subcommand)]
        command: EmuCommand,
    },
    /// Run one experiment and write its log and metrics.
    Run {
        #[command(subcommand)]
        kind: RunKind,
    },
    /// Recompute the metrics of a recorded log.
    Analyze {
        log: PathBuf,
        /// 1-based joint to analyse; picked from the log when omitted.
        #[arg(long)]
        joint: Option<usize>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the emulator parameters to the reference step and tracking figures.
    Calibrate {
        /// Base config; the fitted parameters replace its servo values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sweep grid as JSON (`kp`, `vmax`, `amax`, `command_latency` lists).
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Where to write the calibrated config.
        #[arg(long, default_value = "emulator_default.json")]
        out: PathBuf,
        /// Where to write the full calibration result.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EmuCommand {
    /// Serve the register protocol until terminated.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Listen address.
        #[arg(long, default_value_t = format!("0.0.0.0:{DEFAULT_PORT}"))]
        endpoint: String,
        /// Step a virtual clock instead of serving, then print the final state.
        #[arg(long = "virtual")]
        virtual_clock: bool,
        /// Ticks to run with `--virtual`.
        #[arg(long, requires = "virtual_clock")]
        steps: Option<u64>,
        /// Stop serving after this many seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct Target {
    /// Run against an in-process emulator on a virtual clock.
    #[arg(long)]
    embedded: bool,
    /// Emulator config for `--embedded`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Controller address for socket runs.
    #[arg(long, env = "CRX_ENDPOINT", default_value_t = format!("127.0.0.1:{DEFAULT_PORT}"))]
    endpoint: String,
    /// Per-request timeout for socket runs, ms.
    #[arg(long, default_value_t = 1000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = DEFAULT_STREAM_RATE)]
    stream_rate: f64,
    /// Directory receiving `log.csv` and `metrics.json`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum RunKind {
    Step {
        #[arg(long, default_value_t = 1)]
        joint: usize,
        /// Absolute joint setpoint, deg.
        #[arg(long)]
        setpoint: f64,
        #[arg(long, default_value_t = harness::DEFAULT_STEP_DURATION)]
        duration: f64,
        #[command(flatten)]
        target: Target,
    },
    Sine {
        #[arg(long, default_value_t = 1)]
        joint: usize,
        #[arg(long, default_value_t = 30.0)]
        amp: f64,
        #[arg(long)]
        freq: f64,
        #[arg(long, default_value_t = harness::DEFAULT_SINE_DURATION)]
        duration: f64,
        #[command(flatten)]
        target: Target,
    },
    Traj {
        #[arg(long)]
        traj: PathBuf,
        /// Start from the current pose instead of moving to the first waypoint.
        #[arg(long)]
        no_approach: bool,
        #[command(flatten)]
        target: Target,
    },
    Override {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        no_approach: bool,
        #[command(flatten)]
        target: Target,
    },
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Emu {
            command:
                EmuCommand::Serve {
                    config,
                    endpoint,
                    virtual_clock,
                    steps,
                    duration,
                },
        } => serve(config.as_deref(), &endpoint, virtual_clock, steps, duration),
        Command::Run { kind } => run(kind),
        Command::Analyze { log, joint, out } => analyze(&log, joint, out.as_deref()),
        Command::Calibrate {
            config,
            grid,
            out,
            report,
        } => calibrate(config.as_deref(), grid.as_deref(), &out, report.as_deref()),
    }
}

fn load_config(path: Option<&Path>) -> Result<EmulatorConfig, CliError> {
    Ok(match path {
        Some(p) => EmulatorConfig::load(p)?,
        None => EmulatorConfig::default(),
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn serve(
    config: Option<&Path>,
    endpoint: &str,
    virtual_clock: bool,
    steps: Option<u64>,
    duration: Option<f64>,
) -> Result<(), CliError> {
    let config = load_config(config)?;
    if virtual_clock {
        let mut emu = Emulator::new(config)?;
        let state = emu.step(steps.unwrap_or(0));
        println!("{}", serde_json::to_string(&state).expect("state serializes"));
        return Ok(());
    }
    let mut emu = RealtimeEmulator::start(config)?;
    let addr = emu.serve(endpoint)?;
    println!("listening on {addr}");
    io::stdout().flush().ok();
    match duration {
        Some(s) => thread::sleep(Duration::from_secs_f64(s.max(0.0))),
        None => loop {
            thread::park();
        },
    }
    emu.stop();
    Ok(())
}

fn spec_of(kind: RunKind) -> Result<(ExperimentSpec, Target), CliError> {
    let (experiment, approach, target) = match kind {
        RunKind::Step {
            joint,
            setpoint,
            duration,
            target,
        } => (
            Experiment::Step {
                joint,
                setpoint,
                duration,
            },
            true,
            target,
        ),
        RunKind::Sine {
            joint,
            amp,
            freq,
            duration,
            target,
        } => (
            Experiment::Sine {
                joint,
                amplitude: amp,
                frequency: freq,
                duration,
            },
            true,
            target,
        ),
        RunKind::Traj {
            traj,
            no_approach,
            target,
        } => (
            Experiment::Trajectory {
                trajectory: Trajectory::load(traj)?,
            },
            !no_approach,
            target,
        ),
        RunKind::Override {
            traj,
            schedule,
            no_approach,
            target,
        } => (
            Experiment::Override {
                trajectory: Trajectory::load(traj)?,
                schedule: OverrideSchedule::load(schedule)?,
            },
            !no_approach,
            target,
        ),
    };
    let spec = ExperimentSpec {
        experiment,
        stream_rate: target.stream_rate,
        approach,
    };
    spec.validate()?;
    Ok((spec, target))
}

fn run(kind: RunKind) -> Result<(), CliError> {
    let (spec, target) = spec_of(kind)?;
    let result = if target.embedded {
        let config = load_config(target.config.as_deref())?;
        run_embedded(&config, &spec)
    } else {
        info!("connecting to {}", target.endpoint);
        run_socket(
            target.endpoint.as_str(),
            Duration::from_millis(target.timeout_ms),
            &spec,
        )
    };
    fs::create_dir_all(&target.out).map_err(|source| CliError::Write {
        path: target.out.display().to_string(),
        source,
    })?;
    let log_path = target.out.join("log.csv");
    let metrics_path = target.out.join("metrics.json");
    // a stale metrics file from an earlier run must not survive a failed one
    let _ = fs::remove_file(&metrics_path);
    match result {
        Ok(RunOutput { log, report }) => {
            write_file(&log_path, log.to_csv_string().as_bytes())?;
            let json = report.to_json();
            write_file(&metrics_path, json.as_bytes())?;
            print!("{json}");
            Ok(())
        }
        Err(err) => {
            if let HarnessError::Stream(StreamError::Aborted { log, .. }) = &err {
                if !log.is_empty() {
                    write_file(&log_path, log.to_csv_string().as_bytes())?;
                    eprintln!("partial log written to {}", log_path.display());
                }
            }
            Err(err.into())
        }
    }
}

fn analyze(path: &Path, joint: Option<usize>, out: Option<&Path>) -> Result<(), CliError> {
    let log_err = |source| CliError::Log {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(|e| log_err(e.into()))?;
    let log = ExperimentLog::read_csv(file).map_err(log_err)?;
    let opts = AnalysisOptions {
        joint,
        ..AnalysisOptions::default()
    };
    let json = analyze_log(&log, &opts)?.to_json();
    match out {
        Some(p) => write_file(p, json.as_bytes()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn calibrate(config: Option<&Path>, grid: Option<&Path>, out: &Path, report: Option<&Path>) -> Result<(), CliError> {
    let base = load_config(config)?;
    let grid = match grid {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| CliError::Log {
                path: p.display().to_string(),
                source: source.into(),
            })?;
            serde_json::from_str::<CalibrationGrid>(&text)
                .map_err(|e| HarnessError::Spec(format!("{}: {e}", p.display())))?
        }
        None => CalibrationGrid::default(),
    };
    info!("sweeping {} grid points", grid.len());
    let result = harness::calibrate(&base, &grid, &CalibrationTargets::reference())?;
    let calibrated = result.params.apply(&base);
    calibrated.save(out)?;
    let json = serde_json::to_string_pretty(&result).expect("result serializes") + "\n";
    if let Some(p) = report {
        write_file(p, json.as_bytes())?;
    }
    println!(
        "kp {} vmax {} amax {} command_latency {} objective {:.6} (start {:.6}, {} evaluations)",
        result.params.kp,
        result.params.vmax,
        result.params.amax,
        result.params.command_latency,
        result.objective,
        result.start.objective,
        result.evaluations
    );
    Ok(())
}
