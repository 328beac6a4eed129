//! CSV output of closed-loop logs and input of timestamped trajectories.

use std::io::{Read, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::metrics::{MetricsError, TimedTrajectory, TrajectorySample};
use crate::sim::TrajectoryLog;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Trajectory(#[from] MetricsError),
}

/// Formats with nine significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let digits = 9 - 1 - v.abs().log10().floor() as i32;
    if (0..=17).contains(&digits) {
        let s = format!("{:.*}", digits as usize, v);
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "t", "x", "y", "yaw_rad", "mode", "wp_index", "delta_rad", "d_e", "psi_e_rel", "psi_e_abs",
    "psi_e",
];

pub const STATUS_HEADER: [&str; 11] = [
    "t", "wp_index", "mode", "command", "delta_rad", "d_e", "psi_e_rel", "psi_e_abs", "psi_e",
    "stale", "tick",
];

/// One row per fast-loop tick.
pub fn write_trajectory<W: Write>(log: &TrajectoryLog, out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for s in &log.samples {
        w.write_record([
            fmt_sig(s.t),
            fmt_sig(s.pose.x),
            fmt_sig(s.pose.y),
            fmt_sig(s.pose.yaw),
            s.mode.as_str().to_string(),
            s.waypoint_index.to_string(),
            fmt_sig(s.delta),
            fmt_sig(s.errors.distance),
            fmt_sig(s.errors.yaw_rel),
            fmt_sig(s.errors.yaw_abs),
            fmt_sig(s.errors.yaw),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per slow-loop update.
pub fn write_status<W: Write>(log: &TrajectoryLog, out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATUS_HEADER)?;
    for s in &log.status {
        w.write_record([
            fmt_sig(s.t),
            s.waypoint_index.to_string(),
            s.mode.as_str().to_string(),
            s.command.as_str().to_string(),
            fmt_sig(s.delta),
            fmt_sig(s.errors.distance),
            fmt_sig(s.errors.yaw_rel),
            fmt_sig(s.errors.yaw_abs),
            fmt_sig(s.errors.yaw),
            (s.stale as u8).to_string(),
            s.tick.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `t, x, y[, z][, yaw_rad]` columns by header name. Extra columns are
/// ignored.
pub fn read_trajectory<R: Read>(input: R) -> Result<TimedTrajectory, CsvError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let t = col("t").ok_or(CsvError::MissingColumn("t"))?;
    let x = col("x").ok_or(CsvError::MissingColumn("x"))?;
    let y = col("y").ok_or(CsvError::MissingColumn("y"))?;
    let z = col("z");
    let yaw = col("yaw_rad").or_else(|| col("yaw"));

    let mut samples = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64, CsvError> {
            let raw = rec.get(i).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| CsvError::Row {
                line,
                message: format!("`{raw}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(CsvError::Row {
                    line,
                    message: format!("`{raw}` is not finite"),
                });
            }
            Ok(v)
        };
        samples.push(TrajectorySample {
            t: field(t)?,
            position: Vector3::new(
                field(x)?,
                field(y)?,
                z.map(&field).transpose()?.unwrap_or(0.0),
            ),
            yaw: yaw.map(&field).transpose()?.unwrap_or(0.0),
        });
    }
    Ok(TimedTrajectory::new(samples)?)
}
