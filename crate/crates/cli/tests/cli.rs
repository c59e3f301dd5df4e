use std::fs;
use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use crx_core::emulator::EmulatorConfig;
use crx_core::stream::ExperimentLog;

fn crx() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_crx"));
    c.env_remove("CRX_ENDPOINT");
    c
}

fn asset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets").join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn metrics(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn embedded_step_writes_log_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("step");
    run_ok(crx().args(["run", "step", "--joint", "1", "--setpoint", "30", "--embedded", "--out"]).arg(&out));
    let m = metrics(&out);
    let step = &m["step"]["metrics"];
    assert!((step["t_r"].as_f64().unwrap() - 0.44).abs() <= 0.1 * 0.44);
    assert_eq!(step["os_pct"].as_f64().unwrap(), 0.0);
    assert_eq!(m["control"]["control_freq"].as_f64().unwrap(), 25.0);

    let analyzed = run_ok(crx().arg("analyze").arg(out.join("log.csv")));
    assert_eq!(analyzed.stdout, fs::read(out.join("metrics.json")).unwrap());
}

#[test]
fn embedded_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        run_ok(crx().args(["run", "sine", "--amp", "30", "--freq", "0.25", "--duration", "8", "--embedded", "--out"]).arg(&out));
        (fs::read(out.join("log.csv")).unwrap(), fs::read(out.join("metrics.json")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn override_run_has_three_slope_regimes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ovr");
    run_ok(
        crx()
            .args(["run", "override", "--embedded", "--traj"])
            .arg(asset("j1_swing.json"))
            .arg("--schedule")
            .arg(asset("ovr_10_50_100.json"))
            .arg("--out")
            .arg(&out),
    );
    let log = ExperimentLog::read_csv(fs::File::open(out.join("log.csv")).unwrap()).unwrap();
    let slope = |t0: f64, t1: f64| {
        let at = |t: f64| log.rows.iter().find(|r| (r.t - t).abs() < 1e-6).unwrap().cmd[0];
        (at(t1) - at(t0)) / (t1 - t0)
    };
    let (a, b, c) = (slope(0.0, 2.8), slope(3.2, 5.8), slope(6.0, 7.0));
    assert!((b / a - 5.0).abs() < 1e-6, "{a} {b}");
    assert!((c / a - 10.0).abs() < 1e-6, "{a} {c}");
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{ not json").unwrap();
    let out = crx().args(["emu", "serve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn empty_log_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("empty.csv");
    fs::write(&log, "").unwrap();
    let out = crx().arg("analyze").arg(&log).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn virtual_serve_runs_requested_ticks() {
    let out = run_ok(crx().args(["emu", "serve", "--virtual", "--steps", "250"]));
    let state: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((state["t"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn occupied_port_exits_3() {
    let holder = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = holder.local_addr().unwrap().to_string();
    let out = crx().args(["emu", "serve", "--endpoint", &addr, "--duration", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unreachable_controller_exits_4_without_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = crx()
        .args(["run", "step", "--setpoint", "30", "--timeout-ms", "200", "--out"])
        .arg(&out_dir)
        .env("CRX_ENDPOINT", format!("127.0.0.1:{}", free_port()))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(!out_dir.join("metrics.json").exists());
}

#[test]
fn start_mismatch_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = crx()
        .args(["run", "traj", "--embedded", "--no-approach", "--traj"])
        .arg(asset("j1_swing.json"))
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
    assert!(!out_dir.join("metrics.json").exists());
}

#[test]
fn socket_run_against_served_emulator() {
    let endpoint = format!("127.0.0.1:{}", free_port());
    let mut server = crx()
        .args(["emu", "serve", "--duration", "10", "--endpoint", &endpoint])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    assert!(line.starts_with("listening on"), "{line}");

    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("socket");
    let res = crx()
        .args(["run", "step", "--setpoint", "20", "--duration", "2", "--out"])
        .arg(&out_dir)
        .env("CRX_ENDPOINT", &endpoint)
        .output()
        .unwrap();
    server.kill().ok();
    server.wait().ok();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let m = metrics(&out_dir);
    let freq = m["control"]["control_freq"].as_f64().unwrap();
    assert!((freq - 25.0).abs() <= 0.05 * 25.0, "{freq}");
}

#[test]
fn calibrate_writes_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    fs::write(
        &grid,
        r#"{"kp": [6.0, 9.0], "vmax": [57.5], "amax": [800.0], "command_latency": [0.145]}"#,
    )
    .unwrap();
    let cfg = dir.path().join("cal.json");
    let report = dir.path().join("report.json");
    run_ok(
        crx()
            .arg("calibrate")
            .arg("--grid")
            .arg(&grid)
            .arg("--out")
            .arg(&cfg)
            .arg("--report")
            .arg(&report),
    );
    let loaded = EmulatorConfig::load(&cfg).unwrap();
    let kp = loaded.kp.get(0);
    assert!((6.0..=9.0).contains(&kp), "{kp}");
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(result["objective"].as_f64().unwrap().is_finite());

    fs::write(&grid, r#"{"kp": [], "vmax": [60.0], "amax": [400.0], "command_latency": [0.2]}"#).unwrap();
    let out = crx().arg("calibrate").arg("--grid").arg(&grid).arg("--out").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
