use pyo3::ffi::c_str;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::wrap_pymodule;

fn with_module<F: FnOnce(&Bound<'_, PyDict>)>(f: F) {
    Python::attach(|py| {
        let m = wrap_pymodule!(crx_stream::crx_stream)(py);
        let globals = PyDict::new(py);
        globals.set_item("crx", m).unwrap();
        f(&globals);
    });
}

fn exec(globals: &Bound<'_, PyDict>, code: &std::ffi::CStr) {
    let py = globals.py();
    if let Err(e) = py.run(code, Some(globals), None) {
        e.print(py);
        panic!("python snippet failed");
    }
}

#[test]
fn frame_round_trip() {
    with_module(|g| {
        exec(
            g,
            c_str!(
                r#"
import struct
raw = crx.encode_frame(0x02, 1, struct.pack("<i", 7))
assert raw[:2] == bytes([0x2C, 0xFA]), raw
assert crx.decode_frame(raw[:5]) is None
op, index, payload, used = crx.decode_frame(raw + b"tail")
assert (op, index, used) == (0x02, 1, len(raw))
assert struct.unpack("<i", payload)[0] == 7
try:
    crx.encode_frame(0x7F, 0, b"")
except ValueError:
    pass
else:
    raise AssertionError("unknown opcode accepted")
"#
            ),
        );
    });
}

#[test]
fn emulator_moves_only_when_enabled() {
    with_module(|g| {
        exec(
            g,
            c_str!(
                r#"
emu = crx.Emulator()
emu.write_pr(1, [10.0, 0, 0, 0, 0, 0])
assert emu.step(100).q[0] == 0.0
emu.write_r(1, 1)
s = emu.step(1000)
assert abs(s.q[0] - 10.0) < 0.01, s
assert emu.phase == "TRACK"
assert abs(emu.time - 4.4) < 1e-9
try:
    emu.write_r(0, 1)
except crx.ProtocolError:
    pass
else:
    raise AssertionError("bad index accepted")
"#
            ),
        );
    });
}

#[test]
fn step_run_and_offline_analysis_agree() {
    with_module(|g| {
        exec(
            g,
            c_str!(
                r#"
import json
r = crx.run_step(1, 30.0)
assert len(r) == 125
m = json.loads(r.metrics_json())
assert m["step"]["metrics"]["os_pct"] == 0.0
assert crx.analyze(r.log_csv()) == r.metrics_json()
mae, rmse, mx = crx.tracking_errors(r.cmd(1), r.fb(1))
assert abs(mae - m["tracking"]["mae"]) < 1e-12
try:
    crx.run_step(9, 30.0)
except crx.CrxError:
    pass
else:
    raise AssertionError("bad joint accepted")
"#
            ),
        );
    });
}

#[test]
fn calibration_on_a_small_grid() {
    with_module(|g| {
        exec(
            g,
            c_str!(
                r#"
import json
grid = json.dumps({"kp": [8.9375], "vmax": [57.5], "amax": [800.0], "command_latency": [0.145]})
res = json.loads(crx.calibrate(grid))
assert res["params"]["kp"] == 8.9375
assert res["objective"] < res["start"]["objective"]
cfg = crx.EmulatorConfig()
assert (cfg.kp, cfg.vmax, cfg.amax, cfg.command_latency) == (8.9375, 57.5, 800.0, 0.145)
"#
            ),
        );
    });
}
