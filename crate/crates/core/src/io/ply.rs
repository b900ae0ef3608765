//! ASCII PLY point clouds (`x y z` vertices only).

use std::fmt::Write as _;
use std::path::Path;

use crate::geometry::Vec3;
use crate::metrics::PointCloud;

use super::{read_text, write_file, IoError};

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in &cloud.points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    write_file(path, s.as_bytes())
}

pub fn read_ply(path: &Path) -> Result<PointCloud, IoError> {
    let text = read_text(path)?;
    let err = |m: String| IoError::format(path, m);
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(err("missing ply magic".into()));
    }
    let mut count = None;
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        if let Some(rest) = line.strip_prefix("format ") {
            if !rest.starts_with("ascii") {
                return Err(err(format!("unsupported format {rest:?}")));
            }
        }
        if let Some(rest) = line.strip_prefix("element vertex ") {
            count = Some(
                rest.trim()
                    .parse::<usize>()
                    .map_err(|_| err(format!("bad vertex count {rest:?}")))?,
            );
        }
    }
    let count = count.ok_or_else(|| err("missing vertex element".into()))?;
    let mut points = Vec::with_capacity(count);
    for line in lines.filter(|l| !l.trim().is_empty()).take(count) {
        let v: Vec<f64> = line
            .split_whitespace()
            .take(3)
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| err(format!("bad vertex line {line:?}")))?;
        if v.len() != 3 {
            return Err(err(format!("bad vertex line {line:?}")));
        }
        points.push(Vec3::new(v[0], v[1], v[2]));
    }
    if points.len() != count {
        return Err(err(format!("expected {count} vertices, found {}", points.len())));
    }
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = PointCloud::new(vec![Vec3::new(0.1, -2.0, 1.0 / 3.0), Vec3::new(5.0, 6.0, 7.0)]);
        write_ply(&path, &cloud).unwrap();
        assert_eq!(read_ply(&path).unwrap(), cloud);
    }
}
