//! Trajectory text: `frame_id tx ty tz qx qy qz qw` per line, `#` comments.

use std::path::Path;

use crate::geometry::{CameraPose, Vec3};
use crate::pose::Trajectory;

use super::{read_text, write_file, IoError};

/// Floats use the shortest representation that parses back to the same value.
pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut out = String::from("# frame_id tx ty tz qx qy qz qw\n");
    for p in traj.poses() {
        let t = p.translation;
        let q = p.quaternion();
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            p.frame_id, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        ));
    }
    out
}

/// Parses trajectory text without the identity-anchor check, so files written
/// by other tools can be evaluated as-is.
pub fn parse_trajectory(text: &str) -> Result<Trajectory, String> {
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(format!("line {}: expected 8 fields, found {}", n + 1, fields.len()));
        }
        let frame_id: usize = fields[0]
            .parse()
            .map_err(|_| format!("line {}: bad frame id {:?}", n + 1, fields[0]))?;
        let mut v = [0.0f64; 7];
        for (i, f) in fields[1..].iter().enumerate() {
            v[i] = f.parse().map_err(|_| format!("line {}: bad number {:?}", n + 1, f))?;
            if !v[i].is_finite() {
                return Err(format!("line {}: non-finite value", n + 1));
            }
        }
        let q = [v[3], v[4], v[5], v[6]];
        if q.iter().map(|x| x * x).sum::<f64>() == 0.0 {
            return Err(format!("line {}: zero quaternion", n + 1));
        }
        poses.push(CameraPose::from_quaternion(q, Vec3::new(v[0], v[1], v[2]), frame_id));
    }
    if poses.windows(2).any(|w| w[1].frame_id <= w[0].frame_id) {
        return Err("frame ids must increase strictly".into());
    }
    Ok(Trajectory::from_poses_unchecked(poses))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    write_file(path, format_trajectory(traj).as_bytes())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, IoError> {
    parse_trajectory(&read_text(path)?).map_err(|m| IoError::format(path, m))
}
