use std::fs::File;
use std::thread;
use std::time::Duration;

use crx_core::emulator::{Emulator, EmulatorConfig, RealtimeEmulator};
use crx_core::harness::{analysis_options, assets, run_embedded, Experiment, ExperimentSpec};
use crx_core::metrics::{analyze_log, step_metrics, tracking_errors, AnalysisOptions, StepConventions};
use crx_core::regproto::DEFAULT_TIMEOUT;
use crx_core::stream::{
    sample_trajectory, EmbeddedSession, ExperimentLog, OverrideSchedule, StreamClient, StreamConfig, StreamError,
    TcpSession,
};

fn embedded_client() -> StreamClient<EmbeddedSession> {
    let emu = Emulator::new(EmulatorConfig::default()).unwrap();
    StreamClient::new(EmbeddedSession::new(emu), StreamConfig::default()).unwrap()
}

#[test]
fn commands_are_continuous_on_a_feasible_path() {
    let path = assets::six_joint_path();
    let mut c = embedded_client();
    c.handshake().unwrap();
    let log = c.execute_trajectory(&path, None).unwrap();
    let bound = EmulatorConfig::default().vmax.get(0) / 25.0;
    for w in log.rows.windows(2) {
        assert!(w[1].cmd.max_abs_diff(&w[0].cmd) <= bound);
    }
    assert!(log.rows.last().unwrap().cmd.max_abs_diff(&path.end()) < 1e-9);
}

#[test]
fn constant_override_scales_time_exactly() {
    let swing = assets::j1_swing();
    for ovr in [0.1, 0.25, 0.5, 1.0] {
        let mut c = embedded_client();
        c.handshake().unwrap();
        c.move_to(swing.start(), 0.01, 30.0).unwrap();
        c.set_override(ovr).unwrap();
        let log = c.execute_trajectory(&swing, None).unwrap();
        let mut s = 0.0;
        for row in &log.rows {
            let expected = sample_trajectory(&swing, s);
            assert!(row.cmd.max_abs_diff(&expected) < 1e-9);
            assert_eq!(row.ovr, ovr);
            s += ovr * 0.04;
        }
        let expected_span = swing.duration() / ovr;
        assert!((log.span() - expected_span).abs() <= 0.04 + 1e-9, "{ovr}: {}", log.span());
    }
}

#[test]
fn scheduled_override_matches_integrated_scaled_time() {
    let swing = assets::j1_swing();
    let schedule = assets::ovr_10_50_100();
    let spec = ExperimentSpec::new(Experiment::Override {
        trajectory: swing.clone(),
        schedule: schedule.clone(),
    });
    let log = run_embedded(&EmulatorConfig::default(), &spec).unwrap().log;
    // closed form of s = integral of the piecewise-constant override,
    // evaluated at the start of cycle k
    let s_at = |t: f64| -> f64 {
        if t <= 3.0 {
            0.1 * t
        } else if t <= 6.0 {
            0.3 + 0.5 * (t - 3.0)
        } else {
            1.8 + (t - 6.0)
        }
    };
    for (k, row) in log.rows.iter().enumerate() {
        let t = k as f64 * 0.04;
        let expected = sample_trajectory(&swing, s_at(t));
        assert!(row.cmd.max_abs_diff(&expected) < 1e-6, "cycle {k}");
        assert_eq!(row.ovr, schedule.value_at(t));
    }
    // 1.2 s of path left at override 1 after t = 6 s
    assert!((log.span() - 7.2).abs() <= 0.04 + 1e-9);
    assert!(log.rows.windows(2).all(|w| w[1].cmd[0] >= w[0].cmd[0]));
}

#[test]
fn offline_analysis_matches_run_time_report() {
    let dir = tempfile::tempdir().unwrap();
    let specs = [
        ExperimentSpec::new(Experiment::step(1, 45.0)),
        ExperimentSpec::new(Experiment::sine(1, 30.0, 0.25)),
        ExperimentSpec::new(Experiment::Trajectory {
            trajectory: assets::six_joint_path(),
        }),
    ];
    for (i, spec) in specs.iter().enumerate() {
        let out = run_embedded(&EmulatorConfig::default(), spec).unwrap();
        let path = dir.path().join(format!("run{i}.csv"));
        out.log.write_csv(File::create(&path).unwrap()).unwrap();
        let reread = ExperimentLog::read_csv(File::open(&path).unwrap()).unwrap();
        assert_eq!(reread, out.log);
        let again = analyze_log(&reread, &analysis_options(spec)).unwrap();
        assert_eq!(again.to_json(), out.report.to_json());
        // joint auto-detection agrees with the experiment's joint
        let auto = analyze_log(&reread, &AnalysisOptions::default()).unwrap();
        assert_eq!(auto.to_json(), out.report.to_json());
    }
}

#[test]
fn metrics_ignore_a_time_offset() {
    let out = run_embedded(
        &EmulatorConfig::default(),
        &ExperimentSpec::new(Experiment::step(1, 30.0)),
    )
    .unwrap();
    let mut shifted = out.log.clone();
    for row in &mut shifted.rows {
        row.t += 100.0;
        row.t_cmd += 100.0;
    }
    let conv = StepConventions::default();
    let a = step_metrics(&out.log, 0, 30.0, &conv).unwrap();
    let b = step_metrics(&shifted, 0, 30.0, &conv).unwrap();
    for (x, y) in [(a.t_r, b.t_r), (a.t_s, b.t_s), (a.t_p, b.t_p)] {
        assert!((x - y).abs() < 1e-9);
    }
    assert_eq!(a.os_pct, b.os_pct);
    assert_eq!(a.err_ss, b.err_ss);
    let ra = analyze_log(&out.log, &AnalysisOptions::default()).unwrap();
    let rb = analyze_log(&shifted, &AnalysisOptions::default()).unwrap();
    assert_eq!(ra.tracking, rb.tracking);
    assert!((ra.control.unwrap().mean_cycle - rb.control.unwrap().mean_cycle).abs() < 1e-9);
}

#[test]
fn fixed_point_stream_does_not_move() {
    let mut c = embedded_client();
    let home = c.handshake().unwrap();
    let log = c.stream_setpoint(home, 3.0).unwrap();
    let cmd = log.cmd_series(0);
    let fb = log.fb_series(0);
    assert_eq!(tracking_errors(&cmd, &fb).unwrap().max_err, 0.0);
}

#[test]
fn transport_loss_aborts_with_partial_log() {
    let mut emu = RealtimeEmulator::start(EmulatorConfig::default()).unwrap();
    let addr = emu.serve("127.0.0.1:0").unwrap();
    let session = TcpSession::connect(addr, DEFAULT_TIMEOUT).unwrap();
    let mut c = StreamClient::new(session, StreamConfig::default()).unwrap();
    let home = c.handshake().unwrap();
    let killer = thread::spawn(move || {
        thread::sleep(Duration::from_millis(600));
        emu.stop();
    });
    let err = c.stream_setpoint(home, 5.0).unwrap_err();
    killer.join().unwrap();
    match &err {
        StreamError::Aborted { log, source } => {
            assert!(source.is_transport(), "{source}");
            assert!(log.len() >= 5 && log.len() < 100, "{} rows", log.len());
        }
        other => panic!("expected abort, got {other}"),
    }
    assert!(err.partial_log().is_some());
}

#[test]
fn schedule_file_round_trip() {
    let s = OverrideSchedule::from_json(assets::OVR_10_50_100).unwrap();
    assert_eq!(s.value_at(0.0), 0.1);
    assert_eq!(s.value_at(2.99), 0.1);
    assert_eq!(s.value_at(3.0), 0.5);
    assert_eq!(s.value_at(6.5), 1.0);
}
