//! Region-aware depth composition.
//!
//! Dynamic pixels always keep the first-pass depth. Static pixels either take
//! the mask-aware pass outright or fuse both passes with inverse-variance
//! weights derived from their confidences.

use thiserror::Error;

use crate::densemap::{DenseMap, MapError, MapRole};

/// Regulariser in the fusion weight denominator.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error(transparent)]
    DimensionMismatch(#[from] MapError),
    #[error("no pass defines depth at partitioned pixel ({row}, {col})")]
    UndefinedDepthInRegion { row: usize, col: usize },
    #[error("epsilon must be > 0, got {0}")]
    NonPositiveEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FusionMode {
    HardReplace,
    ConfidenceFused,
}

impl FusionMode {
    pub fn name(self) -> &'static str {
        match self {
            FusionMode::HardReplace => "hard_replace",
            FusionMode::ConfidenceFused => "confidence_fused",
        }
    }
}

/// Static set `S` and dynamic set `D_dyn` as binary masks; pixels in neither
/// carry the mask sentinel in both.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    pub static_mask: DenseMap,
    pub dynamic_mask: DenseMap,
    pub tau: f64,
}

impl RegionPartition {
    pub fn height(&self) -> usize {
        self.static_mask.height()
    }

    pub fn width(&self) -> usize {
        self.static_mask.width()
    }

    #[inline]
    pub fn is_static(&self, idx: usize) -> bool {
        self.static_mask.data()[idx] == 1.0
    }

    #[inline]
    pub fn is_dynamic(&self, idx: usize) -> bool {
        self.dynamic_mask.data()[idx] == 1.0
    }

    pub fn static_count(&self) -> usize {
        self.static_mask.data().iter().filter(|v| **v == 1.0).count()
    }

    pub fn dynamic_count(&self) -> usize {
        self.dynamic_mask.data().iter().filter(|v| **v == 1.0).count()
    }
}

/// Static iff `mask < tau`; negative (undefined) mask values are in neither set.
pub fn partition_regions(mask: &DenseMap, tau: f64) -> RegionPartition {
    let (h, w) = (mask.height(), mask.width());
    let mut s = DenseMap::undefined(h, w, MapRole::Mask);
    let mut d = DenseMap::undefined(h, w, MapRole::Mask);
    for (idx, v) in mask.data().iter().enumerate() {
        if *v < 0.0 {
            continue;
        }
        let dynamic = *v >= tau;
        s.data_mut()[idx] = if dynamic { 0.0 } else { 1.0 };
        d.data_mut()[idx] = if dynamic { 1.0 } else { 0.0 };
    }
    RegionPartition {
        static_mask: s,
        dynamic_mask: d,
        tau,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedDepth {
    pub depth: DenseMap,
    /// Weight on the mask-aware pass; defined on `S` only.
    pub weight: DenseMap,
    pub fused_precision: DenseMap,
    pub mode: FusionMode,
}

impl FusedDepth {
    /// Mean of the weight map over pixels where it is defined (0 if none).
    pub fn mean_weight(&self) -> f64 {
        let vals: Vec<f64> = self.weight.defined_values().collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }
}

fn check_shapes(maps: &[&DenseMap]) -> Result<(), FusionError> {
    for m in &maps[1..] {
        maps[0].same_shape(m)?;
    }
    Ok(())
}

/// `W = c2 / (c1 + c2 + ε)` where both confidences are defined, sentinel elsewhere.
pub fn fusion_weight(c1: &DenseMap, c2: &DenseMap, epsilon: f64) -> Result<DenseMap, FusionError> {
    if !(epsilon > 0.0) {
        return Err(FusionError::NonPositiveEpsilon(epsilon));
    }
    check_shapes(&[c1, c2])?;
    let data = c1
        .data()
        .iter()
        .zip(c2.data())
        .map(|(a, b)| {
            if *a >= 0.0 && *b >= 0.0 {
                b / (a + b + epsilon)
            } else {
                MapRole::Weight.sentinel()
            }
        })
        .collect();
    Ok(DenseMap::from_vec(c1.height(), c1.width(), MapRole::Weight, data)?)
}

/// Pointwise `c1 + c2`; sentinel where either is undefined.
pub fn fused_precision(c1: &DenseMap, c2: &DenseMap) -> Result<DenseMap, FusionError> {
    check_shapes(&[c1, c2])?;
    let data = c1
        .data()
        .iter()
        .zip(c2.data())
        .map(|(a, b)| {
            if *a >= 0.0 && *b >= 0.0 {
                a + b
            } else {
                MapRole::Precision.sentinel()
            }
        })
        .collect();
    Ok(DenseMap::from_vec(c1.height(), c1.width(), MapRole::Precision, data)?)
}

/// Which input a region prefers, falling back to the other pass when the
/// preferred depth is undefined.
fn pick(preferred: (f64, f64), other: (f64, f64)) -> Option<(f64, f64)> {
    if preferred.0 > 0.0 {
        Some(preferred)
    } else if other.0 > 0.0 {
        Some(other)
    } else {
        None
    }
}

struct Inputs<'a> {
    d1: &'a DenseMap,
    d2: &'a DenseMap,
    c1: &'a DenseMap,
    c2: &'a DenseMap,
}

fn compose(inp: &Inputs, part: &RegionPartition, mode: FusionMode, epsilon: f64) -> Result<FusedDepth, FusionError> {
    check_shapes(&[inp.d1, inp.d2, inp.c1, inp.c2, &part.static_mask, &part.dynamic_mask])?;
    let (h, w) = (inp.d1.height(), inp.d1.width());
    let mut depth = DenseMap::undefined(h, w, MapRole::Depth);
    let mut weight = DenseMap::undefined(h, w, MapRole::Weight);
    let mut precision = DenseMap::undefined(h, w, MapRole::Precision);
    for idx in 0..h * w {
        let p1 = (inp.d1.data()[idx], inp.c1.data()[idx]);
        let p2 = (inp.d2.data()[idx], inp.c2.data()[idx]);
        let partitioned = part.is_static(idx) || part.is_dynamic(idx);
        if part.is_static(idx) && p1.0 > 0.0 && p2.0 > 0.0 && mode == FusionMode::ConfidenceFused {
            let (d1, d2) = (p1.0, p2.0);
            let wt = p2.1 / (p1.1 + p2.1 + epsilon);
            depth.data_mut()[idx] = (d1 + wt * (d2 - d1)).clamp(d1.min(d2), d1.max(d2));
            weight.data_mut()[idx] = wt;
            precision.data_mut()[idx] = p1.1 + p2.1;
            continue;
        }
        let chosen = if part.is_static(idx) {
            pick(p2, p1)
        } else {
            pick(p1, p2)
        };
        match chosen {
            Some((d, c)) => {
                depth.data_mut()[idx] = d;
                precision.data_mut()[idx] = c;
                if part.is_static(idx) {
                    weight.data_mut()[idx] = if d == p2.0 && p2.0 > 0.0 { 1.0 } else { 0.0 };
                }
            }
            None if partitioned => {
                return Err(FusionError::UndefinedDepthInRegion {
                    row: idx / w,
                    col: idx % w,
                });
            }
            None => {}
        }
    }
    Ok(FusedDepth {
        depth,
        weight,
        fused_precision: precision,
        mode,
    })
}

/// `d1` on `D_dyn`, `d2` on `S`, as exact copies. Precision is the confidence
/// of the copied pass; the weight map is 1 on `S` where `d2` was used.
pub fn hard_replace(
    d1: &DenseMap,
    d2: &DenseMap,
    c1: &DenseMap,
    c2: &DenseMap,
    part: &RegionPartition,
) -> Result<FusedDepth, FusionError> {
    compose(
        &Inputs { d1, d2, c1, c2 },
        part,
        FusionMode::HardReplace,
        DEFAULT_EPSILON,
    )
}

/// `d1` on `D_dyn`; `d1 + W·(d2 − d1)` on `S` with `W` from [`fusion_weight`],
/// and fused precision `c1 + c2` there.
pub fn fuse_confidence(
    d1: &DenseMap,
    d2: &DenseMap,
    c1: &DenseMap,
    c2: &DenseMap,
    part: &RegionPartition,
    epsilon: f64,
) -> Result<FusedDepth, FusionError> {
    if !(epsilon > 0.0) {
        return Err(FusionError::NonPositiveEpsilon(epsilon));
    }
    compose(&Inputs { d1, d2, c1, c2 }, part, FusionMode::ConfidenceFused, epsilon)
}

/// Per-frame report line: `frame_id mode static_px dynamic_px mean_W`.
pub fn report_line(frame_id: usize, fused: &FusedDepth, part: &RegionPartition) -> String {
    format!(
        "{} {} {} {} {}",
        frame_id,
        fused.mode.name(),
        part.static_count(),
        part.dynamic_count(),
        fused.mean_weight()
    )
}
