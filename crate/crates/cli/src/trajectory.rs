//! Trajectories: one `t tx ty tz qx qy qz qw` record per line, `#` comments.

use std::fmt::Write as _;
use std::path::Path;

use radsim_core::{Pose, Vec3};

use crate::config::quaternion;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    /// Seconds.
    pub timestamp: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.records.iter().map(|r| r.pose).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# t tx ty tz qx qy qz qw\n");
        for r in &self.records {
            let (p, q) = (r.pose.position, r.pose.orientation);
            let _ = writeln!(out, "{} {} {} {} {} {} {} {}", r.timestamp, p.x, p.y, p.z, q.x, q.y, q.z, q.w);
        }
        out
    }
}

/// Parses trajectory text; `path` is only used in error messages.
pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory> {
    let err = |line: usize, message: String| CliError::Trajectory { path: path.to_path_buf(), line, message };
    let mut records: Vec<TrajectoryRecord> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(err(line_no, format!("expected 8 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 8];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(line_no, format!("`{f}` is not a finite number")))?;
        }
        let q = quaternion([v[4], v[5], v[6], v[7]]).map_err(|m| err(line_no, m))?;
        if let Some(prev) = records.last() {
            if !(v[0] > prev.timestamp) {
                return Err(err(
                    line_no,
                    format!("timestamp {} does not increase (previous {})", v[0], prev.timestamp),
                ));
            }
        }
        records.push(TrajectoryRecord { timestamp: v[0], pose: Pose::new(Vec3::new(v[1], v[2], v[3]), q) });
    }
    if records.is_empty() {
        return Err(err(0, "trajectory has no records".into()));
    }
    Ok(Trajectory { records })
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    parse_trajectory(&text, path)
}
