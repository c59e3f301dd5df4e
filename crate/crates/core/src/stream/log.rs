use std::io::{Read, Write};

use thiserror::Error;

use crate::pose::{JointPose, NUM_JOINTS};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Format { line: u64, msg: String },
    #[error("log is empty")]
    Empty,
}

/// One control cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    /// Cycle start, s since the experiment began.
    pub t: f64,
    /// When the command write completed, s since the experiment began.
    pub t_cmd: f64,
    pub cmd: JointPose,
    pub fb: JointPose,
    /// Reported joint velocities, deg/s.
    pub vel: [f64; NUM_JOINTS],
    /// Speed override in force for this cycle.
    pub ovr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentLog {
    pub rows: Vec<LogRow>,
}

pub fn csv_header() -> Vec<String> {
    let mut h = vec!["t".to_string(), "t_cmd".to_string()];
    for prefix in ["cmd", "fb", "vel"] {
        h.extend((1..=NUM_JOINTS).map(|j| format!("{prefix}_j{j}")));
    }
    h.push("ovr".into());
    h
}

impl ExperimentLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn cmd_series(&self, joint: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.cmd[joint]).collect()
    }

    pub fn fb_series(&self, joint: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.fb[joint]).collect()
    }

    pub fn vel_series(&self, joint: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.vel[joint]).collect()
    }

    /// Wall time from first to last row.
    pub fn span(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Writes the log as CSV. Floats use the shortest round-trip form, so
    /// reading the file back yields bit-identical values.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LogError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(csv_header())?;
        let mut rec = Vec::with_capacity(3 + 3 * NUM_JOINTS);
        for row in &self.rows {
            rec.clear();
            rec.push(row.t.to_string());
            rec.push(row.t_cmd.to_string());
            rec.extend(row.cmd.angles().iter().map(f64::to_string));
            rec.extend(row.fb.angles().iter().map(f64::to_string));
            rec.extend(row.vel.iter().map(f64::to_string));
            rec.push(row.ovr.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, LogError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != csv_header() {
            return Err(LogError::Format {
                line: 1,
                msg: format!("unexpected header {header:?}"),
            });
        }
        let mut log = ExperimentLog::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |msg: String| LogError::Format { line, msg };
            let vals = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            let pose = |range: std::ops::Range<usize>| {
                JointPose::from_slice(&vals[range]).map_err(|e| bad(e.to_string()))
            };
            let n = NUM_JOINTS;
            let row = LogRow {
                t: vals[0],
                t_cmd: vals[1],
                cmd: pose(2..2 + n)?,
                fb: pose(2 + n..2 + 2 * n)?,
                vel: vals[2 + 2 * n..2 + 3 * n].try_into().expect("six values"),
                ovr: vals[2 + 3 * n],
            };
            if let Some(prev) = log.rows.last() {
                if !(row.t >= prev.t) {
                    return Err(bad(format!("time {} goes backwards", row.t)));
                }
            }
            log.push(row);
        }
        if log.is_empty() {
            return Err(LogError::Empty);
        }
        Ok(log)
    }
}
