//! Run-directory layout and the readers/writers for every intermediate.

use std::path::{Path, PathBuf};

use crate::densemap::{DenseMap, MapRole};
use crate::geometry::Vec2;
use crate::io::{format_kv, parse_kv, read_dtm, read_text, write_dtm, write_file, write_ply, IoError, KvMap};
use crate::metrics::PointCloud;
use crate::synthscene::{Observation, PassId, PassPrediction};

use super::config::Variant;
use super::AttentionDiagnostic;
use crate::cues::PairMass;

/// Paths inside one run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

fn frame_file(dir: PathBuf, stem: &str, frame: usize, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_{frame:04}.{ext}"))
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn scene_cfg(&self) -> PathBuf {
        self.root.join("scene.cfg")
    }

    pub fn gt_trajectory(&self) -> PathBuf {
        self.root.join("trajectory_gt.txt")
    }

    pub fn gt_depth(&self, f: usize) -> PathBuf {
        frame_file(self.root.join("gt"), "depth", f, "dtm")
    }

    pub fn gt_mask(&self, f: usize) -> PathBuf {
        frame_file(self.root.join("gt"), "mask", f, "dtm")
    }

    pub fn observations(&self, f: usize) -> PathBuf {
        frame_file(self.root.join("observations"), "frame", f, "txt")
    }

    pub fn pass_depth(&self, pass: PassId, f: usize) -> PathBuf {
        frame_file(self.root.join(pass.name()), "depth", f, "dtm")
    }

    pub fn pass_confidence(&self, pass: PassId, f: usize) -> PathBuf {
        frame_file(self.root.join(pass.name()), "conf", f, "dtm")
    }

    pub fn trajectory(&self, pass: PassId) -> PathBuf {
        self.root.join(format!("traj_{}.txt", pass.name()))
    }

    pub fn saliency(&self, f: usize) -> PathBuf {
        frame_file(self.root.join("mask"), "saliency", f, "dtm")
    }

    pub fn tau(&self) -> PathBuf {
        self.root.join("mask").join("tau.txt")
    }

    pub fn attention(&self) -> PathBuf {
        self.root.join("mask").join("attention.txt")
    }

    pub fn variant_dir(&self, v: &Variant) -> PathBuf {
        self.root.join("fused").join(v.name())
    }

    pub fn fused_depth(&self, v: &Variant, f: usize) -> PathBuf {
        frame_file(self.variant_dir(v), "depth", f, "dtm")
    }

    pub fn fusion_report(&self, v: &Variant) -> PathBuf {
        self.variant_dir(v).join("fusion_report.txt")
    }

    pub fn cloud(&self, v: &Variant) -> PathBuf {
        self.variant_dir(v).join("cloud.ply")
    }

    pub fn report(&self, csv: bool) -> PathBuf {
        self.root.join(if csv { "report.csv" } else { "report.txt" })
    }

    /// Number of consecutive frames `0..n` present for the given per-frame file.
    pub fn count_frames(&self, path_of: impl Fn(usize) -> PathBuf) -> usize {
        (0..).take_while(|f| path_of(*f).is_file()).count()
    }
}

pub fn write_kv_file(path: &Path, kv: &KvMap) -> Result<(), IoError> {
    write_file(path, format_kv(kv).as_bytes())
}

pub fn read_kv_file(path: &Path) -> Result<KvMap, IoError> {
    parse_kv(&read_text(path)?).map_err(|m| IoError::Format {
        path: path.to_path_buf(),
        message: m,
    })
}

pub fn write_maps(path_of: impl Fn(usize) -> PathBuf, maps: &[DenseMap]) -> Result<(), IoError> {
    maps.iter().enumerate().try_for_each(|(f, m)| write_dtm(&path_of(f), m))
}

pub fn read_maps(path_of: impl Fn(usize) -> PathBuf, n: usize, role: MapRole) -> Result<Vec<DenseMap>, IoError> {
    (0..n).map(|f| read_dtm(&path_of(f), role)).collect()
}

pub fn write_pass(layout: &RunLayout, preds: &[PassPrediction]) -> Result<(), IoError> {
    for p in preds {
        write_dtm(&layout.pass_depth(p.pass_id, p.frame_id), &p.depth)?;
        write_dtm(&layout.pass_confidence(p.pass_id, p.frame_id), &p.confidence)?;
    }
    Ok(())
}

pub fn read_pass(layout: &RunLayout, pass: PassId, n: usize) -> Result<Vec<PassPrediction>, IoError> {
    (0..n)
        .map(|f| {
            Ok(PassPrediction {
                frame_id: f,
                pass_id: pass,
                depth: read_dtm(&layout.pass_depth(pass, f), MapRole::Depth)?,
                confidence: read_dtm(&layout.pass_confidence(pass, f), MapRole::Confidence)?,
            })
        })
        .collect()
}

/// One line per observation: `point row col u v z dyn`, with `u v` the
/// observed (noisy) pixel and `z` the point depth.
pub fn format_observations(obs: &[Observation]) -> String {
    let mut out = String::from("# point row col u v z dyn\n");
    for o in obs {
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            o.point,
            o.row,
            o.col,
            o.observed.x,
            o.observed.y,
            o.depth,
            u8::from(o.dynamic)
        ));
    }
    out
}

/// Inverse of [`format_observations`]; the noise-free projection is not
/// stored, so it is set to the observed pixel.
pub fn parse_observations(text: &str) -> Result<Vec<Observation>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(format!("line {}: expected 7 fields, found {}", n + 1, f.len()));
        }
        let bad = |i: usize| format!("line {}: bad field {:?}", n + 1, f[i]);
        let num = |i: usize| f[i].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(i));
        let observed = Vec2::new(num(3)?, num(4)?);
        out.push(Observation {
            point: f[0].parse().map_err(|_| bad(0))?,
            row: f[1].parse().map_err(|_| bad(1))?,
            col: f[2].parse().map_err(|_| bad(2))?,
            projection: observed,
            observed,
            depth: num(5)?,
            dynamic: match f[6] {
                "0" => false,
                "1" => true,
                _ => return Err(bad(6)),
            },
        });
    }
    Ok(out)
}

pub fn write_observations(layout: &RunLayout, frames: &[&[Observation]]) -> Result<(), IoError> {
    frames
        .iter()
        .enumerate()
        .try_for_each(|(f, obs)| write_file(&layout.observations(f), format_observations(obs).as_bytes()))
}

pub fn read_observations(layout: &RunLayout, n: usize) -> Result<Vec<Vec<Observation>>, IoError> {
    (0..n)
        .map(|f| {
            let path = layout.observations(f);
            parse_observations(&read_text(&path)?).map_err(|m| IoError::Format { path, message: m })
        })
        .collect()
}

pub fn write_tau(layout: &RunLayout, tau: f64) -> Result<(), IoError> {
    write_file(&layout.tau(), format!("{tau}\n").as_bytes())
}

pub fn read_tau(layout: &RunLayout) -> Result<f64, IoError> {
    let path = layout.tau();
    let text = read_text(&path)?;
    text.trim().parse().map_err(|_| IoError::Format {
        path,
        message: format!("bad threshold {:?}", text.trim()),
    })
}

/// One line per ordered frame pair: `query key mass_before mass_after`.
pub fn write_attention(layout: &RunLayout, diag: &AttentionDiagnostic) -> Result<(), IoError> {
    let mut text = String::from("# query_frame key_frame mass_before mass_after\n");
    for (b, a) in diag.before.iter().zip(&diag.after) {
        text.push_str(&format!("{} {} {} {}\n", b.query_frame, b.key_frame, b.mass, a.mass));
    }
    write_file(&layout.attention(), text.as_bytes())
}

pub fn read_attention(layout: &RunLayout) -> Result<AttentionDiagnostic, IoError> {
    let path = layout.attention();
    let text = read_text(&path)?;
    let (mut before, mut after) = (Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || IoError::Format {
            path: path.clone(),
            message: format!("line {}: expected `query key before after`", n + 1),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let (q, k): (usize, usize) = (f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?);
        let (mb, ma): (f64, f64) = (f[2].parse().map_err(|_| bad())?, f[3].parse().map_err(|_| bad())?);
        before.push(PairMass {
            query_frame: q,
            key_frame: k,
            mass: mb,
        });
        after.push(PairMass {
            query_frame: q,
            key_frame: k,
            mass: ma,
        });
    }
    if before.is_empty() {
        return Err(IoError::Format {
            path,
            message: "no frame pairs".into(),
        });
    }
    Ok(AttentionDiagnostic::from_pairs(before, after))
}

pub fn write_variant(
    layout: &RunLayout,
    variant: &Variant,
    depths: &[DenseMap],
    report_lines: &[String],
    cloud: Option<&PointCloud>,
) -> Result<(), IoError> {
    write_maps(|f| layout.fused_depth(variant, f), depths)?;
    if !report_lines.is_empty() {
        let mut text = String::from("# frame_id mode static_px dynamic_px mean_weight\n");
        for l in report_lines {
            text.push_str(l);
            text.push('\n');
        }
        write_file(&layout.fusion_report(variant), text.as_bytes())?;
    }
    if let Some(c) = cloud {
        write_ply(&layout.cloud(variant), c)?;
    }
    Ok(())
}
