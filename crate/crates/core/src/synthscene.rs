//! Deterministic synthetic dynamic scenes with full ground truth.
//!
//! A scene is a relief wall of static points in front of which one or more
//! spherical caps of dynamic points translate at constant velocity while the
//! camera follows a configurable path. Frames are rendered by 1-pixel point
//! splatting with a z-buffer; pixels that receive no point are undefined
//! (depth 0). Depth maps are stored `f32`-exact so that exporting them to the
//! binary map format is lossless.

use crate::densemap::{DenseMap, MapRole};
use crate::geometry::{CameraPose, Intrinsics, Mat3, Vec2, Vec3};
use crate::rng::{substream, TAG_CAMERA, TAG_MISCALIBRATION, TAG_OBSERVATION, TAG_PASS_NOISE, TAG_SCENE};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

/// Variance floor used when turning a noise level into a confidence.
pub const SIGMA_FLOOR: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("invalid noise profile: {0}")]
    InvalidNoiseProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraPath {
    Orbit,
    Linear,
    RandomWalk,
}

impl CameraPath {
    pub fn name(self) -> &'static str {
        match self {
            CameraPath::Orbit => "orbit",
            CameraPath::Linear => "linear",
            CameraPath::RandomWalk => "random_walk",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "orbit" => Some(CameraPath::Orbit),
            "linear" => Some(CameraPath::Linear),
            "random_walk" => Some(CameraPath::RandomWalk),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub num_frames: usize,
    pub num_static_points: usize,
    pub num_dynamic_points: usize,
    pub intrinsics: Intrinsics,
    pub camera_path: CameraPath,
    /// Path amplitude in scene units.
    pub camera_amplitude: f64,
    /// One velocity (scene units per frame) per dynamic object.
    pub object_velocities: Vec<Vec3>,
    pub pixel_noise_sigma: f64,
    pub wall_depth: f64,
    pub wall_relief: f64,
    pub object_depth: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            num_frames: 20,
            num_static_points: 2000,
            num_dynamic_points: 200,
            intrinsics: Intrinsics::centered(48.0, 48, 40),
            camera_path: CameraPath::Orbit,
            camera_amplitude: 0.15,
            object_velocities: vec![Vec3::new(0.1, 0.0, 0.0)],
            pixel_noise_sigma: 0.2,
            wall_depth: 6.0,
            wall_relief: 0.4,
            object_depth: 3.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidConfig(m));
        if self.num_frames < 2 {
            return bad(format!("num_frames must be >= 2, got {}", self.num_frames));
        }
        if self.num_static_points == 0 {
            return bad("num_static_points must be > 0".into());
        }
        if self.num_dynamic_points > 0 && self.object_velocities.is_empty() {
            return bad("dynamic points require at least one object velocity".into());
        }
        if !(self.pixel_noise_sigma >= 0.0) {
            return bad(format!(
                "pixel_noise_sigma must be >= 0, got {}",
                self.pixel_noise_sigma
            ));
        }
        if !(self.camera_amplitude >= 0.0) {
            return bad(format!("camera_amplitude must be >= 0, got {}", self.camera_amplitude));
        }
        if !(self.wall_depth > 0.0 && self.object_depth > 0.0 && self.object_depth < self.wall_depth) {
            return bad("need 0 < object_depth < wall_depth".into());
        }
        if !(self.wall_relief >= 0.0 && self.wall_relief < 0.5 * self.wall_depth) {
            return bad("wall_relief must be in [0, wall_depth/2)".into());
        }
        self.intrinsics
            .validate()
            .map_err(|e| SceneError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn num_objects(&self) -> usize {
        if self.num_dynamic_points == 0 {
            0
        } else {
            self.object_velocities.len()
        }
    }
}

/// Identity of a scene point; static points come first.
pub type PointId = u32;

/// A visible point in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub point: PointId,
    pub row: usize,
    pub col: usize,
    /// Noise-free sub-pixel projection.
    pub projection: Vec2,
    /// Projection perturbed by pixel noise.
    pub observed: Vec2,
    /// Camera-frame depth of the point.
    pub depth: f64,
    pub dynamic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub frame_id: usize,
    pub depth: DenseMap,
    /// 1 where the rendering point is dynamic, 0 where static, −1 undefined.
    pub dynamic_mask: DenseMap,
    pub point_ids: Vec<Option<PointId>>,
    /// Visible points in row-major pixel order.
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub config: SceneConfig,
    /// Camera-to-world poses; frame 0 is the identity.
    pub trajectory: Vec<CameraPose>,
    pub static_points: Vec<Vec3>,
    /// Per frame, world positions of every dynamic point.
    pub dynamic_points: Vec<Vec<Vec3>>,
    pub object_of: Vec<usize>,
    pub frames: Vec<FrameTruth>,
}

impl SceneTruth {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.config.intrinsics
    }

    pub fn num_points(&self) -> usize {
        self.static_points.len() + self.object_of.len()
    }

    pub fn is_dynamic(&self, id: PointId) -> bool {
        id as usize >= self.static_points.len()
    }

    pub fn point_world(&self, id: PointId, frame: usize) -> Vec3 {
        let i = id as usize;
        let ns = self.static_points.len();
        if i < ns {
            self.static_points[i]
        } else {
            self.dynamic_points[frame][i - ns]
        }
    }

    /// World displacement of a point between frames `r` and `t` (zero for static points).
    pub fn displacement(&self, id: PointId, r: usize, t: usize) -> Vec3 {
        self.point_world(id, t) - self.point_world(id, r)
    }

    pub fn depth_maps(&self) -> Vec<DenseMap> {
        self.frames.iter().map(|f| f.depth.clone()).collect()
    }

    pub fn dynamic_masks(&self) -> Vec<DenseMap> {
        self.frames.iter().map(|f| f.dynamic_mask.clone()).collect()
    }

    /// World positions of the splat surfaces seen through each defined pixel
    /// centre of `frame`, in row-major order.
    pub fn rendered_points(&self, frame: usize) -> Vec<Vec3> {
        let k = self.intrinsics();
        let pose = &self.trajectory[frame];
        let depth = &self.frames[frame].depth;
        let mut out = Vec::with_capacity(depth.defined_count());
        for row in 0..depth.height() {
            for col in 0..depth.width() {
                let z = depth.get(row, col);
                if z > 0.0 {
                    let ray = Vec3::new((col as f64 - k.cx) / k.fx, (row as f64 - k.cy) / k.fy, 1.0);
                    out.push(pose.transform_point(&(ray * z)));
                }
            }
        }
        out
    }
}

fn look_at(center: Vec3, target: Vec3) -> Mat3 {
    let z = (target - center).normalize();
    let x = Vec3::new(0.0, 1.0, 0.0).cross(&z).normalize();
    let y = z.cross(&x);
    Mat3::from_columns(&[x, y, z])
}

fn camera_trajectory(config: &SceneConfig) -> Vec<CameraPose> {
    let n = config.num_frames;
    let a = config.camera_amplitude;
    let target = Vec3::new(0.0, 0.0, config.wall_depth);
    let raw: Vec<CameraPose> = match config.camera_path {
        CameraPath::Orbit => (0..n)
            .map(|t| {
                let theta = 2.0 * std::f64::consts::PI * t as f64 / n as f64;
                let c = Vec3::new(a * theta.sin(), 0.5 * a * (1.0 - theta.cos()), 0.0);
                CameraPose::new(look_at(c, target), c, t)
            })
            .collect(),
        CameraPath::Linear => {
            let dir = Vec3::new(1.0, 0.2, 0.1).normalize();
            (0..n)
                .map(|t| {
                    let s = t as f64 / (n - 1) as f64;
                    CameraPose::from_translation(dir * (a * s), t)
                })
                .collect()
        }
        CameraPath::RandomWalk => {
            let mut rng = substream(config.seed, TAG_CAMERA, 0);
            let step = a / (n as f64).sqrt();
            let mut pose = CameraPose::identity(0);
            let mut out = vec![pose];
            for t in 1..n {
                let g = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
                let dt = Vec3::new(g(&mut rng), g(&mut rng), g(&mut rng)) * step;
                let dw = Vec3::new(g(&mut rng), g(&mut rng), g(&mut rng)) * (0.1 * step / config.wall_depth);
                let inc = crate::geometry::se3_exp(dw, dt, t);
                pose = pose.compose(&inc).with_frame_id(t);
                out.push(pose);
            }
            out
        }
    };
    // anchor frame 0 at the identity
    let anchor = raw[0].inverse();
    raw.iter()
        .enumerate()
        .map(|(t, p)| anchor.compose(p).with_frame_id(t))
        .collect()
}

fn wall_depth_at(config: &SceneConfig, xn: f64, yn: f64, phase: (f64, f64)) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    config.wall_depth
        + config.wall_relief * (two_pi * 0.9 * xn + phase.0).sin() * (two_pi * 0.7 * yn + phase.1).cos()
        + 0.15 * config.wall_depth * xn
}

fn static_points(config: &SceneConfig, rng: &mut impl Rng) -> Vec<Vec3> {
    let k = &config.intrinsics;
    let margin = 3.0;
    let w = k.width as f64 + 2.0 * margin;
    let h = k.height as f64 + 2.0 * margin;
    let n = config.num_static_points;
    let gh = ((n as f64 * h / w).sqrt().round() as usize).max(1);
    let gw = n.div_ceil(gh);
    let cell_w = w / gw as f64;
    let cell_h = h / gh as f64;
    let mut cells: Vec<usize> = (0..gh * gw).collect();
    cells.shuffle(rng);
    cells.truncate(n);
    cells.sort_unstable();
    let phase = (
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    cells
        .into_iter()
        .map(|cell| {
            let (gy, gx) = (cell / gw, cell % gw);
            let u = -margin - 0.5 + (gx as f64 + 0.5 + rng.random_range(-0.25..0.25)) * cell_w;
            let v = -margin - 0.5 + (gy as f64 + 0.5 + rng.random_range(-0.25..0.25)) * cell_h;
            let xn = (u - k.cx) / k.fx;
            let yn = (v - k.cy) / k.fy;
            let z = wall_depth_at(config, xn, yn, phase);
            Vec3::new(xn * z, yn * z, z)
        })
        .collect()
}

/// Local offsets of the points of one spherical cap facing the camera.
fn object_cap(config: &SceneConfig, count: usize, depth: f64, rng: &mut impl Rng) -> Vec<Vec3> {
    let f = config.intrinsics.fx.min(config.intrinsics.fy);
    let spacing = 0.8;
    let radius_px = (count as f64 * spacing * spacing / std::f64::consts::PI).sqrt() + spacing;
    let radius = radius_px * depth / f;
    let extent = radius_px.ceil() as i64 + 1;
    let steps = (extent as f64 / spacing).ceil() as i64;
    let mut cand: Vec<(f64, Vec2)> = Vec::new();
    for iy in -steps..=steps {
        for ix in -steps..=steps {
            let du = ix as f64 * spacing + rng.random_range(-0.1..0.1);
            let dv = iy as f64 * spacing + rng.random_range(-0.1..0.1);
            let r = (du * du + dv * dv).sqrt();
            cand.push((r, Vec2::new(du, dv)));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    cand.truncate(count);
    cand.into_iter()
        .map(|(_, d)| {
            let x = d.x * depth / f;
            let y = d.y * depth / f;
            let zc = (radius * radius - x * x - y * y).max(0.0).sqrt();
            Vec3::new(x, y, -zc)
        })
        .collect()
}

struct DynamicLayout {
    per_frame: Vec<Vec<Vec3>>,
    object_of: Vec<usize>,
}

fn dynamic_points(config: &SceneConfig, rng: &mut impl Rng) -> DynamicLayout {
    let n_obj = config.num_objects();
    let t_mid = (config.num_frames as f64 - 1.0) * 0.5;
    let mut local = Vec::new();
    let mut object_of = Vec::new();
    let mut centers = Vec::new();
    for o in 0..n_obj {
        let count = config.num_dynamic_points / n_obj + usize::from(o < config.num_dynamic_points % n_obj);
        let depth = config.object_depth + 0.3 * o as f64;
        // objects stacked vertically, path centred on the optical axis at mid-sequence
        let y_off = (o as f64 - (n_obj as f64 - 1.0) * 0.5) * 0.35 * depth;
        let mid = Vec3::new(0.0, y_off, depth);
        centers.push(mid - config.object_velocities[o] * t_mid);
        for p in object_cap(config, count, depth, rng) {
            local.push(p);
            object_of.push(o);
        }
    }
    let per_frame = (0..config.num_frames)
        .map(|t| {
            local
                .iter()
                .zip(&object_of)
                .map(|(p, &o)| centers[o] + config.object_velocities[o] * t as f64 + p)
                .collect()
        })
        .collect();
    DynamicLayout { per_frame, object_of }
}

fn render_frame(
    config: &SceneConfig,
    pose: &CameraPose,
    frame: usize,
    world: &[Vec3],
    num_static: usize,
) -> FrameTruth {
    let k = &config.intrinsics;
    let (h, w) = (k.height, k.width);
    let to_cam = pose.inverse();
    let mut zbuf = vec![f64::INFINITY; h * w];
    let mut owner: Vec<Option<(PointId, Vec2)>> = vec![None; h * w];
    for (id, p) in world.iter().enumerate() {
        let pc = to_cam.transform_point(p);
        let Ok(px) = k.project(&pc) else { continue };
        let Some((row, col)) = k.pixel_index(&px) else {
            continue;
        };
        let idx = row * w + col;
        // ties go to the lower id because ids are visited in increasing order
        if pc.z < zbuf[idx] {
            zbuf[idx] = pc.z;
            owner[idx] = Some((id as PointId, px));
        }
    }
    let mut rng = substream(config.seed, TAG_OBSERVATION, frame as u64);
    let mut depth = DenseMap::undefined(h, w, MapRole::Depth);
    let mut mask = DenseMap::undefined(h, w, MapRole::Mask);
    let mut point_ids = vec![None; h * w];
    let mut observations = Vec::new();
    for idx in 0..h * w {
        let Some((id, px)) = owner[idx] else { continue };
        let z = zbuf[idx];
        let dynamic = id as usize >= num_static;
        depth.data_mut()[idx] = z as f32 as f64;
        mask.data_mut()[idx] = if dynamic { 1.0 } else { 0.0 };
        point_ids[idx] = Some(id);
        let nu: f64 = StandardNormal.sample(&mut rng);
        let nv: f64 = StandardNormal.sample(&mut rng);
        observations.push(Observation {
            point: id,
            row: idx / w,
            col: idx % w,
            projection: px,
            observed: px + Vec2::new(nu, nv) * config.pixel_noise_sigma,
            depth: z,
            dynamic,
        });
    }
    FrameTruth {
        frame_id: frame,
        depth,
        dynamic_mask: mask,
        point_ids,
        observations,
    }
}

/// Builds the full ground truth for `config`. Deterministic in `config.seed`.
pub fn generate_scene(config: &SceneConfig) -> Result<SceneTruth, SceneError> {
    config.validate()?;
    let mut rng = substream(config.seed, TAG_SCENE, 0);
    let trajectory = camera_trajectory(config);
    let statics = static_points(config, &mut rng);
    let dynamics = dynamic_points(config, &mut rng);
    let num_static = statics.len();
    let frames: Vec<FrameTruth> = (0..config.num_frames)
        .into_par_iter()
        .map(|t| {
            let mut world = statics.clone();
            world.extend_from_slice(&dynamics.per_frame[t]);
            render_frame(config, &trajectory[t], t, &world, num_static)
        })
        .collect();
    Ok(SceneTruth {
        config: config.clone(),
        trajectory,
        static_points: statics,
        dynamic_points: dynamics.per_frame,
        object_of: dynamics.object_of,
        frames,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PassId {
    First,
    MaskAware,
}

impl PassId {
    pub fn name(self) -> &'static str {
        match self {
            PassId::First => "pass1",
            PassId::MaskAware => "pass2",
        }
    }

    fn tag(self) -> u64 {
        match self {
            PassId::First => 0,
            PassId::MaskAware => 1,
        }
    }
}

/// Per-region depth noise of one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassNoise {
    pub sigma_static: f64,
    pub sigma_dynamic: f64,
}

/// Confidence scaling on a random pixel subset, used to model miscalibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Miscalibration {
    pub fraction: f64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfile {
    pub first: PassNoise,
    pub mask_aware: PassNoise,
    pub calibration_gain: f64,
    pub miscalibration: Option<Miscalibration>,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            first: PassNoise {
                sigma_static: 0.05,
                sigma_dynamic: 0.01,
            },
            mask_aware: PassNoise {
                sigma_static: 0.01,
                sigma_dynamic: 0.10,
            },
            calibration_gain: 1.0,
            miscalibration: None,
        }
    }
}

impl NoiseProfile {
    pub fn noiseless() -> Self {
        let zero = PassNoise {
            sigma_static: 0.0,
            sigma_dynamic: 0.0,
        };
        Self {
            first: zero,
            mask_aware: zero,
            ..Self::default()
        }
    }

    pub fn pass(&self, id: PassId) -> PassNoise {
        match id {
            PassId::First => self.first,
            PassId::MaskAware => self.mask_aware,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        for (name, p) in [("first", self.first), ("mask_aware", self.mask_aware)] {
            if !(p.sigma_static >= 0.0 && p.sigma_dynamic >= 0.0) {
                return Err(SceneError::InvalidNoiseProfile(format!(
                    "{name} pass sigmas must be >= 0 (static {}, dynamic {})",
                    p.sigma_static, p.sigma_dynamic
                )));
            }
        }
        if !(self.calibration_gain > 0.0) {
            return Err(SceneError::InvalidNoiseProfile("calibration_gain must be > 0".into()));
        }
        if let Some(m) = self.miscalibration {
            if !(0.0..=1.0).contains(&m.fraction) || !(m.multiplier > 0.0) {
                return Err(SceneError::InvalidNoiseProfile(
                    "miscalibration needs fraction in [0,1] and multiplier > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Depth and confidence predicted by one pass for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PassPrediction {
    pub frame_id: usize,
    pub pass_id: PassId,
    pub depth: DenseMap,
    pub confidence: DenseMap,
}

/// Confidence of a pixel with noise level `sigma`.
pub fn calibrated_confidence(gain: f64, sigma: f64) -> f64 {
    gain / (sigma * sigma).max(SIGMA_FLOOR * SIGMA_FLOOR)
}

/// Adds region-dependent Gaussian depth noise to the ground truth and attaches
/// inverse-variance confidences.
pub fn corrupt_pass(
    truth: &SceneTruth,
    pass_id: PassId,
    profile: &NoiseProfile,
    seed: u64,
) -> Result<Vec<PassPrediction>, SceneError> {
    profile.validate()?;
    let noise = profile.pass(pass_id);
    let out = truth
        .frames
        .par_iter()
        .map(|frame| {
            let stream = (frame.frame_id as u64) << 1 | pass_id.tag();
            let mut noise_rng = substream(seed, TAG_PASS_NOISE, stream);
            let mut select_rng = substream(seed, TAG_MISCALIBRATION, stream);
            let (h, w) = (frame.depth.height(), frame.depth.width());
            let mut depth = DenseMap::undefined(h, w, MapRole::Depth);
            // confidence stays positive everywhere; undefined depth is carried by the depth sentinel
            let fallback = calibrated_confidence(profile.calibration_gain, noise.sigma_static) as f32 as f64;
            let mut confidence = DenseMap::filled(h, w, MapRole::Confidence, fallback);
            for idx in 0..h * w {
                let z = frame.depth.data()[idx];
                if z <= 0.0 {
                    continue;
                }
                let sigma = if frame.dynamic_mask.data()[idx] > 0.5 {
                    noise.sigma_dynamic
                } else {
                    noise.sigma_static
                };
                let e: f64 = StandardNormal.sample(&mut noise_rng);
                let noisy = (z + sigma * e).max(1e-3 * z);
                let mut c = calibrated_confidence(profile.calibration_gain, sigma);
                let u: f64 = select_rng.random();
                if let Some(m) = profile.miscalibration {
                    if u < m.fraction {
                        c *= m.multiplier;
                    }
                }
                depth.data_mut()[idx] = noisy as f32 as f64;
                confidence.data_mut()[idx] = c as f32 as f64;
            }
            PassPrediction {
                frame_id: frame.frame_id,
                pass_id,
                depth,
                confidence,
            }
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneConfig {
        SceneConfig {
            num_frames: 4,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        let mut c = small();
        c.num_frames = 1;
        assert!(generate_scene(&c).is_err());
        let mut c = small();
        c.num_static_points = 0;
        assert!(generate_scene(&c).is_err());
        let mut c = small();
        c.pixel_noise_sigma = -1.0;
        assert!(matches!(generate_scene(&c), Err(SceneError::InvalidConfig(_))));
    }

    #[test]
    fn first_pose_is_identity_and_poses_are_rotations() {
        for path in [CameraPath::Orbit, CameraPath::Linear, CameraPath::RandomWalk] {
            let truth = generate_scene(&SceneConfig {
                camera_path: path,
                ..small()
            })
            .unwrap();
            let p0 = truth.trajectory[0];
            assert!((p0.rotation - Mat3::identity()).norm() < 1e-12, "{path:?}");
            assert!(p0.translation.norm() < 1e-12);
            for p in &truth.trajectory {
                assert!(p.orthonormality_error() < 1e-9);
            }
        }
    }

    #[test]
    fn default_scene_is_mostly_defined() {
        let truth = generate_scene(&SceneConfig::default()).unwrap();
        for f in &truth.frames {
            assert!(
                f.depth.defined_fraction() >= 0.5,
                "frame {} {}",
                f.frame_id,
                f.depth.defined_fraction()
            );
            assert!(f.dynamic_mask.data().contains(&1.0));
        }
    }

    #[test]
    fn no_dynamic_points_means_empty_masks() {
        let truth = generate_scene(&SceneConfig {
            num_dynamic_points: 0,
            ..small()
        })
        .unwrap();
        for f in &truth.frames {
            assert!(f.dynamic_mask.data().iter().all(|v| *v <= 0.0));
        }
    }

    #[test]
    fn zero_velocity_objects_are_still_masked() {
        let truth = generate_scene(&SceneConfig {
            object_velocities: vec![Vec3::zeros()],
            ..small()
        })
        .unwrap();
        let ns = truth.static_points.len() as PointId;
        for t in 1..truth.num_frames() {
            assert_eq!(truth.displacement(ns, 0, t), Vec3::zeros());
        }
        assert!(truth.frames.iter().all(|f| f.dynamic_mask.data().contains(&1.0)));
    }

    #[test]
    fn dynamic_points_move_by_velocity() {
        let truth = generate_scene(&small()).unwrap();
        let ns = truth.static_points.len() as PointId;
        let d = truth.displacement(ns + 5, 1, 3);
        assert!((d - Vec3::new(0.2, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_scene(&small()).unwrap();
        let b = generate_scene(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&SceneConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.static_points, c.static_points);
    }

    #[test]
    fn mask_marks_pixels_rendered_by_dynamic_points() {
        let truth = generate_scene(&small()).unwrap();
        for f in &truth.frames {
            for (idx, id) in f.point_ids.iter().enumerate() {
                let m = f.dynamic_mask.data()[idx];
                match id {
                    None => assert_eq!(m, -1.0),
                    Some(id) => assert_eq!(m == 1.0, truth.is_dynamic(*id)),
                }
            }
        }
    }

    #[test]
    fn rendered_points_lie_within_a_pixel_footprint_of_scene_points() {
        let truth = generate_scene(&small()).unwrap();
        let k = *truth.intrinsics();
        for t in 0..truth.num_frames() {
            let f = &truth.frames[t];
            let pts = truth.rendered_points(t);
            let mut i = 0;
            for id in f.point_ids.iter() {
                let Some(id) = id else { continue };
                let true_p = truth.point_world(*id, t);
                let z = truth.trajectory[t].inverse().transform_point(&true_p).z;
                let footprint = z * (0.5f64.hypot(0.5)) / k.fx.min(k.fy);
                assert!((pts[i] - true_p).norm() <= footprint + 1e-5);
                i += 1;
            }
        }
    }

    #[test]
    fn zero_noise_pass_equals_truth() {
        let truth = generate_scene(&small()).unwrap();
        let passes = corrupt_pass(&truth, PassId::First, &NoiseProfile::noiseless(), 3).unwrap();
        for (p, f) in passes.iter().zip(&truth.frames) {
            assert_eq!(p.depth, f.depth);
            for c in p.confidence.data() {
                assert_eq!(*c, (1.0 / (SIGMA_FLOOR * SIGMA_FLOOR)) as f32 as f64);
            }
        }
    }

    #[test]
    fn negative_sigma_is_rejected() {
        let truth = generate_scene(&small()).unwrap();
        let mut profile = NoiseProfile::default();
        profile.mask_aware.sigma_dynamic = -0.1;
        assert!(matches!(
            corrupt_pass(&truth, PassId::MaskAware, &profile, 0),
            Err(SceneError::InvalidNoiseProfile(_))
        ));
    }

    #[test]
    fn miscalibration_scales_confidence_only() {
        let truth = generate_scene(&small()).unwrap();
        let base = NoiseProfile::default();
        let mis = NoiseProfile {
            miscalibration: Some(Miscalibration {
                fraction: 0.05,
                multiplier: 10.0,
            }),
            ..base
        };
        let a = corrupt_pass(&truth, PassId::First, &base, 11).unwrap();
        let b = corrupt_pass(&truth, PassId::First, &mis, 11).unwrap();
        let (mut scaled, mut total) = (0usize, 0usize);
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa.depth, pb.depth);
            for ((ca, cb), d) in pa
                .confidence
                .data()
                .iter()
                .zip(pb.confidence.data())
                .zip(pa.depth.data())
            {
                if *d <= 0.0 {
                    continue;
                }
                total += 1;
                if ca != cb {
                    scaled += 1;
                    assert_eq!(*cb, (*ca * 10.0) as f32 as f64);
                }
            }
        }
        let frac = scaled as f64 / total as f64;
        assert!((frac - 0.05).abs() < 0.01, "{frac}");
    }
}
