//! Plain-text trajectories: `timestamp tx ty tz qx qy qz qw` per line.

use std::path::Path;

use msgraph_core::eval::Trajectory;

use crate::error::{self, Error, LineError};
use crate::num;

pub fn format_trajectory(t: &Trajectory) -> String {
    let mut out = String::new();
    for (s, p) in t.poses() {
        out.push_str(&num::fmt(*s));
        out.push(' ');
        num::push(&mut out, &num::pose_fields(p));
        out.push('\n');
    }
    out
}

/// Parses a trajectory; blank lines and `#` comments are skipped.
pub fn parse_trajectory(text: &str) -> Result<Trajectory, LineError> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(LineError::new(line_no, format!("expected 8 fields, found {}", fields.len())));
        }
        let vals = fields
            .iter()
            .map(|f| num::parse_f64(f))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| LineError::new(line_no, e))?;
        let pose = num::pose_from_fields(&vals[1..]).ok_or_else(|| LineError::new(line_no, "invalid pose"))?;
        poses.push((vals[0], pose));
    }
    Trajectory::new(poses).map_err(|e| match e {
        msgraph_core::eval::EvalError::NonIncreasing { index, .. } => {
            LineError::new(index + 1, "timestamps must strictly increase")
        }
        other => LineError::new(0, other),
    })
}

pub fn export_trajectory(t: &Trajectory, path: &Path) -> Result<(), Error> {
    error::write(path, &format_trajectory(t))
}

pub fn import_trajectory(path: &Path) -> Result<Trajectory, Error> {
    parse_trajectory(&error::read(path)?).map_err(|e| e.at(path))
}
