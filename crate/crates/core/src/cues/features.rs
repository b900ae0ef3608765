use std::collections::BTreeMap;

use crate::densemap::DenseMap;
use crate::geometry::{warp, CameraPose, Intrinsics, PixelCorrespondence, Vec2};
use crate::synthscene::{Observation, PointId};

use super::CueConfig;

/// Bias, relative depth, depth gradient, and the two residual components.
pub const FEATURE_DIM: usize = 5;

/// Geometric features of every patch of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeatures {
    pub frame_id: usize,
    pub tokens_h: usize,
    pub tokens_w: usize,
    pub patch_size: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub values: Vec<[f64; FEATURE_DIM]>,
    pub defined: Vec<bool>,
}

impl PatchFeatures {
    pub fn empty(
        frame_id: usize,
        tokens_h: usize,
        tokens_w: usize,
        patch_size: usize,
        image_height: usize,
        image_width: usize,
    ) -> Self {
        let n = tokens_h * tokens_w;
        Self {
            frame_id,
            tokens_h,
            tokens_w,
            patch_size,
            image_height,
            image_width,
            values: vec![[0.0; FEATURE_DIM]; n],
            defined: vec![false; n],
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens_h * self.tokens_w
    }
}

/// Per-pixel residual between where a point is observed in the current frame
/// and where the reference observation lands after warping it with `depth_ref`
/// and `relative` (reference camera to current camera). Pixels without a
/// matched point are `None`.
pub fn reprojection_residuals(
    reference: &[Observation],
    current: &[Observation],
    depth_ref: &DenseMap,
    relative: &CameraPose,
    k: &Intrinsics,
) -> Vec<Option<Vec2>> {
    let by_id: BTreeMap<PointId, &Observation> = reference.iter().map(|o| (o.point, o)).collect();
    let mut out = vec![None; k.num_pixels()];
    for obs in current {
        let Some(prev) = by_id.get(&obs.point) else {
            continue;
        };
        let d = depth_ref.get(prev.row, prev.col);
        if d <= 0.0 {
            continue;
        }
        let corr = PixelCorrespondence::new(prev.observed, d, Default::default());
        if let Ok(w) = warp(&corr, relative, k) {
            out[obs.row * k.width + obs.col] = Some(obs.observed - w.pixel);
        }
    }
    out
}

/// Summarises a depth map and residual field into patch features.
///
/// Features are `[1, mean depth / frame median depth, mean |∇depth| / frame
/// median depth, g·R(t·φ)·mean residual]` where `R` is a 2D rotation by the
/// frame index times the temporal phase. Patches without defined depth stay
/// zero and undefined.
pub fn patch_features(
    depth: &DenseMap,
    residuals: &[Option<Vec2>],
    frame_id: usize,
    config: &CueConfig,
) -> PatchFeatures {
    let (h, w) = (depth.height(), depth.width());
    let p = config.patch_size;
    let (th, tw) = (h.div_ceil(p), w.div_ceil(p));
    let mut out = PatchFeatures::empty(frame_id, th, tw, p, h, w);

    let mut defined: Vec<f64> = depth.defined_values().collect();
    if defined.is_empty() {
        return out;
    }
    defined.sort_by(f64::total_cmp);
    let median = defined[(defined.len() - 1) / 2];

    let n = th * tw;
    let mut depth_sum = vec![0.0; n];
    let mut depth_cnt = vec![0usize; n];
    let mut grad_sum = vec![0.0; n];
    let mut grad_cnt = vec![0usize; n];
    let mut res_sum = vec![Vec2::zeros(); n];
    let mut res_cnt = vec![0usize; n];
    for r in 0..h {
        for c in 0..w {
            let tok = (r / p) * tw + c / p;
            let d = depth.get(r, c);
            if d <= 0.0 {
                continue;
            }
            depth_sum[tok] += d;
            depth_cnt[tok] += 1;
            for (rr, cc) in [(r, c + 1), (r + 1, c)] {
                if rr < h && cc < w && depth.get(rr, cc) > 0.0 {
                    grad_sum[tok] += (depth.get(rr, cc) - d).abs();
                    grad_cnt[tok] += 1;
                }
            }
            if let Some(res) = residuals.get(r * w + c).copied().flatten() {
                res_sum[tok] += res;
                res_cnt[tok] += 1;
            }
        }
    }

    let angle = frame_id as f64 * config.temporal_phase;
    let (s, co) = angle.sin_cos();
    for tok in 0..n {
        if depth_cnt[tok] == 0 {
            continue;
        }
        let mean_depth = depth_sum[tok] / depth_cnt[tok] as f64;
        let grad = if grad_cnt[tok] > 0 {
            grad_sum[tok] / grad_cnt[tok] as f64
        } else {
            0.0
        };
        let res = if res_cnt[tok] > 0 {
            res_sum[tok] / res_cnt[tok] as f64
        } else {
            Vec2::zeros()
        };
        let rot = Vec2::new(co * res.x - s * res.y, s * res.x + co * res.y) * config.residual_gain;
        out.values[tok] = [1.0, mean_depth / median, grad / median, rot.x, rot.y];
        out.defined[tok] = true;
    }
    out
}
