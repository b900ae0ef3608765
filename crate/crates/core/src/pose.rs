//! Weighted rigid registration and trajectory estimation.
//!
//! Each consecutive frame pair yields 3D correspondences of the same scene
//! points; a weighted Kabsch solve gives the relative pose, and relative poses
//! are chained into a camera-to-world trajectory anchored at frame 0.

use std::collections::BTreeMap;

use nalgebra::SVD;
use thiserror::Error;

use crate::densemap::DenseMap;
use crate::geometry::{CameraPose, Intrinsics, Mat3, Vec3};
use crate::synthscene::{Observation, PointId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("correspondence fields have different lengths ({0}, {1}, {2})")]
    LengthMismatch(usize, usize, usize),
    #[error("weight {0} is outside [0, 1]")]
    InvalidWeight(f64),
    #[error("total weight is zero")]
    ZeroWeightMass,
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("frame pair ending at frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<PoseError>,
    },
}

/// Relative collinearity tolerance on the weighted spread of the source points.
const COLLINEAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCorrespondenceSet {
    pub points_r: Vec<Vec3>,
    pub points_t: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl WeightedCorrespondenceSet {
    pub fn new(points_r: Vec<Vec3>, points_t: Vec<Vec3>, weights: Vec<f64>) -> Result<Self, PoseError> {
        if points_r.len() != points_t.len() || points_r.len() != weights.len() {
            return Err(PoseError::LengthMismatch(points_r.len(), points_t.len(), weights.len()));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(PoseError::InvalidWeight(*w));
        }
        Ok(Self {
            points_r,
            points_t,
            weights,
        })
    }

    pub fn unweighted(points_r: Vec<Vec3>, points_t: Vec<Vec3>) -> Result<Self, PoseError> {
        let n = points_r.len();
        Self::new(points_r, points_t, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `Σ wᵢ ‖T·p_r,i − p_t,i‖²`.
pub fn geometric_loss(pose: &CameraPose, set: &WeightedCorrespondenceSet) -> f64 {
    set.points_r
        .iter()
        .zip(&set.points_t)
        .zip(&set.weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|((pr, pt), w)| w * (pose.transform_point(pr) - pt).norm_squared())
        .sum()
}

/// Closed-form minimiser of [`geometric_loss`] over SE(3) (weighted Kabsch,
/// no scale). A reflection is corrected by flipping the singular vector of
/// the smallest singular value.
pub fn weighted_pose_solve(set: &WeightedCorrespondenceSet) -> Result<CameraPose, PoseError> {
    let total: f64 = set.weights.iter().sum();
    if !(total > 0.0) {
        return Err(PoseError::ZeroWeightMass);
    }
    let support = set.weights.iter().filter(|w| **w > 0.0).count();
    if support < 3 {
        return Err(PoseError::DegenerateConfiguration(format!(
            "{support} points with positive weight, need 3"
        )));
    }
    let mut c_r = Vec3::zeros();
    let mut c_t = Vec3::zeros();
    for ((pr, pt), w) in set.points_r.iter().zip(&set.points_t).zip(&set.weights) {
        c_r += pr * *w;
        c_t += pt * *w;
    }
    c_r /= total;
    c_t /= total;
    let mut h = Mat3::zeros();
    let mut spread = Mat3::zeros();
    for ((pr, pt), w) in set.points_r.iter().zip(&set.points_t).zip(&set.weights) {
        if *w > 0.0 {
            let a = pr - c_r;
            h += (a * (pt - c_t).transpose()) * *w;
            spread += (a * a.transpose()) * *w;
        }
    }
    let mut ev = spread.symmetric_eigenvalues().as_slice().to_vec();
    ev.sort_by(f64::total_cmp);
    if !(ev[1] > COLLINEAR_TOL * ev[2].max(f64::MIN_POSITIVE)) {
        return Err(PoseError::DegenerateConfiguration("collinear support".into()));
    }
    let svd = SVD::new(h, true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    // nalgebra orders singular values decreasingly; the last one is the smallest
    let correction = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, if d < 0.0 { -1.0 } else { 1.0 }));
    let rotation = v * correction * u.transpose();
    let translation = c_t - rotation * c_r;
    Ok(CameraPose::new(rotation, translation, 0))
}

/// Camera-to-world poses, one per frame, starting at the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<CameraPose>,
}

impl Trajectory {
    /// Checks that frame ids increase strictly and the first pose is the
    /// identity (to within 1e-9).
    pub fn new(poses: Vec<CameraPose>) -> Result<Self, PoseError> {
        if let Some(first) = poses.first() {
            let off = (first.rotation - Mat3::identity()).norm() + first.translation.norm();
            if off > 1e-9 {
                return Err(PoseError::InvalidTrajectory(format!(
                    "first pose is not the identity (off by {off:e})"
                )));
            }
        }
        if poses.windows(2).any(|w| w[1].frame_id <= w[0].frame_id) {
            return Err(PoseError::InvalidTrajectory("frame ids must increase strictly".into()));
        }
        Ok(Self { poses })
    }

    /// Wraps arbitrary poses without the anchor check; used for evaluation
    /// inputs such as rigidly transformed trajectories.
    pub fn from_poses_unchecked(poses: Vec<CameraPose>) -> Self {
        Self { poses }
    }

    pub fn poses(&self) -> &[CameraPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&CameraPose> {
        self.poses.get(i)
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.poses.iter().map(|p| p.translation).collect()
    }

    /// Pose mapping camera `r` coordinates into camera `t` coordinates.
    pub fn relative(&self, r: usize, t: usize) -> CameraPose {
        self.poses[t].inverse().compose(&self.poses[r])
    }

    /// Round-trips every rotation through its unit quaternion until the
    /// result is stable, so that writing and re-reading the trajectory text
    /// reproduces it bitwise.
    pub fn canonicalized(&self) -> Self {
        let poses = self
            .poses
            .iter()
            .map(|p| {
                let mut cur = *p;
                for _ in 0..8 {
                    let next = CameraPose::from_quaternion(cur.quaternion(), cur.translation, cur.frame_id);
                    if next == cur {
                        break;
                    }
                    cur = next;
                }
                cur
            })
            .collect();
        Self { poses }
    }
}

/// Correspondences between frames `t−1` and `t` for every point visible in
/// both, backprojected from the observed pixels at the point depth. Weights
/// are `1 − mask` at the source pixel, or 1 when `mask` is `None`.
pub fn frame_pair_correspondences(
    source: &[Observation],
    target: &[Observation],
    k: &Intrinsics,
    mask: Option<&DenseMap>,
) -> Result<WeightedCorrespondenceSet, PoseError> {
    let by_id: BTreeMap<PointId, &Observation> = target.iter().map(|o| (o.point, o)).collect();
    let (mut pr, mut pt, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for o in source {
        let Some(t) = by_id.get(&o.point) else {
            continue;
        };
        pr.push(k.backproject(&o.observed, o.depth));
        pt.push(k.backproject(&t.observed, t.depth));
        w.push(match mask {
            Some(m) => 1.0 - m.get(o.row, o.col).clamp(0.0, 1.0),
            None => 1.0,
        });
    }
    WeightedCorrespondenceSet::new(pr, pt, w)
}

/// Chains per-pair solves into a trajectory. With `use_mask` the weights come
/// from `masks[t−1]`; otherwise all weights are 1.
pub fn estimate_trajectory(
    observations: &[Vec<Observation>],
    masks: &[DenseMap],
    k: &Intrinsics,
    use_mask: bool,
) -> Result<Trajectory, PoseError> {
    let n = observations.len();
    if n < 2 {
        return Err(PoseError::TooFewFrames(n));
    }
    if use_mask && masks.len() != n {
        return Err(PoseError::LengthMismatch(n, masks.len(), n));
    }
    use rayon::prelude::*;
    let relatives: Vec<Result<CameraPose, PoseError>> = (1..n)
        .into_par_iter()
        .map(|t| {
            let mask = use_mask.then(|| &masks[t - 1]);
            frame_pair_correspondences(&observations[t - 1], &observations[t], k, mask)
                .and_then(|set| weighted_pose_solve(&set))
                .map_err(|e| PoseError::AtFrame {
                    frame: t,
                    source: Box::new(e),
                })
        })
        .collect();
    let mut poses = vec![CameraPose::identity(0)];
    for (i, rel) in relatives.into_iter().enumerate() {
        let rel = rel?;
        let prev = poses[i];
        poses.push(prev.compose(&rel.inverse()).with_frame_id(i + 1));
    }
    Trajectory::new(poses)
}
