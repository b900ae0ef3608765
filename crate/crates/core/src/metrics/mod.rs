//! Point-cloud and trajectory metrics.

mod nn;

pub use nn::{brute_force_nearest, nearest_distances, squared_distance, GridIndex, BRUTE_FORCE_BELOW};

use nalgebra::SVD;
use rayon::prelude::*;
use thiserror::Error;

use crate::densemap::DenseMap;
use crate::geometry::{rotation_angle, Intrinsics, Mat3, Vec2, Vec3};
use crate::pose::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("trajectory lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid delta {delta} for trajectories of length {len}")]
    InvalidDelta { delta: usize, len: usize },
    #[error("stride must be >= 1")]
    InvalidStride,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub frame_ids: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            frame_ids: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Backprojects every `stride`-th row and column of each depth map and moves
/// the points to world coordinates with the matching pose.
pub fn unproject_cloud(
    depths: &[DenseMap],
    traj: &Trajectory,
    k: &Intrinsics,
    stride: usize,
) -> Result<PointCloud, MetricError> {
    if stride == 0 {
        return Err(MetricError::InvalidStride);
    }
    if depths.len() != traj.len() {
        return Err(MetricError::LengthMismatch(depths.len(), traj.len()));
    }
    let (mut points, mut frames) = (Vec::new(), Vec::new());
    for (f, (depth, pose)) in depths.iter().zip(traj.poses()).enumerate() {
        for row in (0..depth.height()).step_by(stride) {
            for col in (0..depth.width()).step_by(stride) {
                let z = depth.get(row, col);
                if z > 0.0 {
                    let p = k.backproject(&Vec2::new(col as f64, row as f64), z);
                    points.push(pose.transform_point(&p));
                    frames.push(f);
                }
            }
        }
    }
    if points.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    Ok(PointCloud {
        points,
        frame_ids: Some(frames),
    })
}

/// Nearest-neighbour backend for [`chamfer_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborSearch {
    /// Grid above [`BRUTE_FORCE_BELOW`] reference points, brute force below.
    Auto,
    Grid,
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChamferStats {
    pub acc_mean: f64,
    pub acc_median: f64,
    pub comp_mean: f64,
    pub comp_median: f64,
    pub dist_mean: f64,
    pub dist_median: f64,
}

/// Mean (summed in sorted order) and lower median of a sorted sample.
fn summarize(sorted: &[f64]) -> (f64, f64) {
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    (mean, sorted[(sorted.len() - 1) / 2])
}

fn directed(from: &[Vec3], to: &[Vec3], search: NeighborSearch) -> Vec<f64> {
    let mut d = match search {
        NeighborSearch::Auto => nearest_distances(from, to),
        NeighborSearch::BruteForce => from.par_iter().map(|q| brute_force_nearest(q, to)).collect(),
        NeighborSearch::Grid => {
            let index = GridIndex::new(to);
            from.par_iter().map(|q| index.nearest(q)).collect()
        }
    };
    d.sort_by(f64::total_cmp);
    d
}

/// Chamfer statistics with automatic neighbour search.
pub fn chamfer(pred: &PointCloud, gt: &PointCloud) -> Result<ChamferStats, MetricError> {
    chamfer_with(pred, gt, NeighborSearch::Auto)
}

/// Accuracy (pred to gt), completeness (gt to pred), and distance over the
/// union of both directed distance multisets.
pub fn chamfer_with(pred: &PointCloud, gt: &PointCloud, search: NeighborSearch) -> Result<ChamferStats, MetricError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let acc = directed(&pred.points, &gt.points, search);
    let comp = directed(&gt.points, &pred.points, search);
    let (acc_mean, acc_median) = summarize(&acc);
    let (comp_mean, comp_median) = summarize(&comp);
    let mut all = acc;
    all.extend_from_slice(&comp);
    all.sort_by(f64::total_cmp);
    let (dist_mean, dist_median) = summarize(&all);
    Ok(ChamferStats {
        acc_mean,
        acc_median,
        comp_mean,
        comp_median,
        // the union mean lies between the directed means; clamp away rounding
        dist_mean: dist_mean.clamp(acc_mean.min(comp_mean), acc_mean.max(comp_mean)),
        dist_median,
    })
}

/// Rigid (no scale) least-squares alignment `y ≈ R·x + t`.
pub fn align_rigid(x: &[Vec3], y: &[Vec3]) -> (Mat3, Vec3) {
    let n = x.len() as f64;
    let cx = x.iter().sum::<Vec3>() / n;
    let cy = y.iter().sum::<Vec3>() / n;
    let mut h = Mat3::zeros();
    for (a, b) in x.iter().zip(y) {
        h += (a - cx) * (b - cy).transpose();
    }
    let svd = SVD::new(h, true, true);
    let (u, v) = (svd.u.expect("u"), svd.v_t.expect("v_t").transpose());
    let mut s = Mat3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = v * s * u.transpose();
    (r, cy - r * cx)
}

/// RMSE of camera positions after rigid alignment of `pred` onto `gt`.
pub fn ate(pred: &Trajectory, gt: &Trajectory) -> Result<f64, MetricError> {
    if pred.len() != gt.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gt.len()));
    }
    if pred.len() < 2 {
        return Err(MetricError::InvalidDelta {
            delta: 0,
            len: pred.len(),
        });
    }
    let (x, y) = (pred.positions(), gt.positions());
    let (r, t) = align_rigid(&x, &y);
    let sse: f64 = x.iter().zip(&y).map(|(a, b)| (r * a + t - b).norm_squared()).sum();
    Ok((sse / x.len() as f64).sqrt())
}

/// Relative translation error (scene units) and rotation error (degrees),
/// both as RMSE over frame pairs `(i, i + delta)`.
pub fn rpe(pred: &Trajectory, gt: &Trajectory, delta: usize) -> Result<(f64, f64), MetricError> {
    if pred.len() != gt.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gt.len()));
    }
    if delta == 0 || delta >= pred.len() {
        return Err(MetricError::InvalidDelta { delta, len: pred.len() });
    }
    let (p, g) = (pred.poses(), gt.poses());
    let m = p.len() - delta;
    let (mut st, mut sr) = (0.0, 0.0);
    for i in 0..m {
        let rel_g = g[i].inverse().compose(&g[i + delta]);
        let rel_p = p[i].inverse().compose(&p[i + delta]);
        let e = rel_g.inverse().compose(&rel_p);
        st += e.translation.norm_squared();
        sr += rotation_angle(&e.rotation).to_degrees().powi(2);
    }
    Ok(((st / m as f64).sqrt(), (sr / m as f64).sqrt()))
}

/// ROC AUC via the Mann–Whitney statistic with average ranks for ties.
/// `None` when either class is empty.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|k| labels[**k]).count() as f64 * avg;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// The nine reported metrics of one variant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub acc_mean: f64,
    pub acc_median: f64,
    pub comp_mean: f64,
    pub comp_median: f64,
    pub dist_mean: f64,
    pub dist_median: f64,
    pub ate: f64,
    pub rte: f64,
    pub rre: f64,
}

impl MetricReport {
    pub const NAMES: [&'static str; 9] = [
        "acc_mean",
        "acc_median",
        "comp_mean",
        "comp_median",
        "dist_mean",
        "dist_median",
        "ate",
        "rte",
        "rre",
    ];

    pub fn from_parts(c: ChamferStats, ate: f64, rte: f64, rre: f64) -> Self {
        Self {
            acc_mean: c.acc_mean,
            acc_median: c.acc_median,
            comp_mean: c.comp_mean,
            comp_median: c.comp_median,
            dist_mean: c.dist_mean,
            dist_median: c.dist_median,
            ate,
            rte,
            rre,
        }
    }

    pub fn values(&self) -> [f64; 9] {
        [
            self.acc_mean,
            self.acc_median,
            self.comp_mean,
            self.comp_median,
            self.dist_mean,
            self.dist_median,
            self.ate,
            self.rte,
            self.rre,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }

    pub fn tsv_header() -> String {
        Self::NAMES.join("\t")
    }

    pub fn to_tsv(&self) -> String {
        self.values()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("\t")
    }

    pub fn to_kv(&self, prefix: &str) -> String {
        Self::NAMES
            .iter()
            .zip(self.values())
            .map(|(n, v)| format!("{prefix}{n}={v}\n"))
            .collect()
    }
}

/// Evaluates a predicted depth sequence and trajectory against ground truth.
pub fn evaluate(
    pred_depths: &[DenseMap],
    pred_traj: &Trajectory,
    gt_cloud: &PointCloud,
    gt_traj: &Trajectory,
    k: &Intrinsics,
    stride: usize,
    delta: usize,
) -> Result<MetricReport, MetricError> {
    let pred = unproject_cloud(pred_depths, pred_traj, k, stride)?;
    let c = chamfer(&pred, gt_cloud)?;
    let a = ate(pred_traj, gt_traj)?;
    let (rte, rre) = rpe(pred_traj, gt_traj, delta)?;
    Ok(MetricReport::from_parts(c, a, rte, rre))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densemap::MapRole;
    use crate::geometry::CameraPose;

    #[test]
    fn pinhole_identity_point() {
        let k = Intrinsics::centered(10.0, 5, 5);
        let mut d = DenseMap::undefined(5, 5, MapRole::Depth);
        d.set(2, 2, 1.0);
        let t = Trajectory::new(vec![CameraPose::identity(0)]).unwrap();
        let c = unproject_cloud(&[d.clone()], &t, &k, 1).unwrap();
        assert_eq!(c.points, vec![Vec3::new(0.0, 0.0, 1.0)]);
        assert_eq!(
            unproject_cloud(&[DenseMap::undefined(5, 5, MapRole::Depth)], &t, &k, 1),
            Err(MetricError::EmptyCloud)
        );
        assert_eq!(unproject_cloud(&[d], &t, &k, 0), Err(MetricError::InvalidStride));
    }

    #[test]
    fn identical_clouds_score_zero() {
        let pts: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64, 0.0, 1.0)).collect();
        let c = chamfer(&PointCloud::new(pts.clone()), &PointCloud::new(pts)).unwrap();
        assert_eq!(c, ChamferStats::default());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(roc_auc(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(roc_auc(&[0.9, 0.1], &[false, true]), Some(0.0));
        assert_eq!(roc_auc(&[0.9], &[true]), None);
    }

    #[test]
    fn trajectory_errors() {
        let t = Trajectory::new(vec![
            CameraPose::identity(0),
            CameraPose::from_translation(Vec3::x(), 1),
        ])
        .unwrap();
        assert_eq!(ate(&t, &t).unwrap(), 0.0);
        assert_eq!(rpe(&t, &t, 1).unwrap(), (0.0, 0.0));
        assert!(matches!(rpe(&t, &t, 2), Err(MetricError::InvalidDelta { .. })));
        let short = Trajectory::new(vec![CameraPose::identity(0)]).unwrap();
        assert_eq!(ate(&t, &short), Err(MetricError::LengthMismatch(2, 1)));
    }
}
