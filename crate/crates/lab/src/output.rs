//! CSV trajectories and JSON reports.
//!
//! Both formats are byte-identical across runs of the same scenario: no
//! timestamps, fixed float formatting, deterministic key order.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use consensus_core::dynamics::Trajectory;
use consensus_core::lyapunov::spread;
use serde::Serialize;

/// 17 significant digits, enough to round-trip an `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Indices of the written rows: every `stride`-th sample plus the last one.
fn rows(len: usize, stride: usize) -> impl Iterator<Item = usize> {
    let stride = stride.max(1);
    let last = len.saturating_sub(1);
    (0..len).step_by(stride).chain((len > 0 && !last.is_multiple_of(stride)).then_some(last))
}

/// `time,x_1,…,x_n,V_spread`.
pub fn trajectory_csv(traj: &Trajectory, stride: usize) -> String {
    let n = traj.n();
    let mut out = String::from("time");
    for k in 1..=n {
        let _ = write!(out, ",x_{k}");
    }
    out.push_str(",V_spread\n");
    for i in rows(traj.len(), stride) {
        let x = &traj.states()[i];
        out.push_str(&format_value(traj.times()[i]));
        for v in x {
            out.push(',');
            out.push_str(&format_value(*v));
        }
        out.push(',');
        out.push_str(&format_value(spread(x).unwrap_or(0.0)));
        out.push('\n');
    }
    out
}

pub fn report_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialise");
    s.push('\n');
    s
}

pub fn write_csv(path: &Path, traj: &Trajectory, stride: usize) -> io::Result<()> {
    fs::write(path, trajectory_csv(traj, stride))
}

pub fn write_report<T: Serialize>(path: &Path, report: &T) -> io::Result<()> {
    fs::write(path, report_json(report))
}
