use std::path::PathBuf;

use crate::cues::CueConfig;
use crate::fusion::DEFAULT_EPSILON;
use crate::geometry::{Intrinsics, Vec3};
use crate::io::KvMap;
use crate::synthscene::{CameraPath, Miscalibration, NoiseProfile, SceneConfig};

/// How depth is produced for a variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DepthSource {
    Pass1Only,
    Pass2Only,
    HardReplace,
    ConfidenceFused,
}

impl DepthSource {
    pub const ALL: [DepthSource; 4] = [
        DepthSource::Pass1Only,
        DepthSource::Pass2Only,
        DepthSource::HardReplace,
        DepthSource::ConfidenceFused,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DepthSource::Pass1Only => "pass1_only",
            DepthSource::Pass2Only => "pass2_only",
            DepthSource::HardReplace => "hard_replace",
            DepthSource::ConfidenceFused => "confidence_fused",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }

    /// Row label of the ablation table.
    pub fn label(self) -> &'static str {
        match self {
            DepthSource::Pass1Only => "Baseline",
            DepthSource::Pass2Only => "+Pose Decoupling",
            DepthSource::HardReplace => "+Hard Replacement",
            DepthSource::ConfidenceFused => "+Conf. Fusion",
        }
    }

    /// The baseline keeps the first-pass (unmasked) trajectory; every later
    /// row uses the mask-aware one.
    pub fn default_pose(self) -> PoseMode {
        match self {
            DepthSource::Pass1Only => PoseMode::Unmasked,
            _ => PoseMode::Masked,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PoseMode {
    Masked,
    Unmasked,
}

impl PoseMode {
    pub fn name(self) -> &'static str {
        match self {
            PoseMode::Masked => "masked",
            PoseMode::Unmasked => "unmasked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variant {
    pub depth: DepthSource,
    pub pose: PoseMode,
}

impl Variant {
    pub fn standard(depth: DepthSource) -> Self {
        Self {
            depth,
            pose: depth.default_pose(),
        }
    }

    pub fn ablation_rows() -> Vec<Variant> {
        DepthSource::ALL.into_iter().map(Variant::standard).collect()
    }

    /// The depth-source name, suffixed with `@<pose>` for a non-default pose.
    pub fn name(&self) -> String {
        if self.pose == self.depth.default_pose() {
            self.depth.name().to_string()
        } else {
            format!("{}@{}", self.depth.name(), self.pose.name())
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.split_once('@') {
            None => DepthSource::parse(s).map(Variant::standard),
            Some((d, p)) => {
                let depth = DepthSource::parse(d)?;
                let pose = match p {
                    "masked" => PoseMode::Masked,
                    "unmasked" => PoseMode::Unmasked,
                    _ => return None,
                };
                Some(Self { depth, pose })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauMode {
    Otsu,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scene: SceneConfig,
    pub noise: NoiseProfile,
    pub cues: CueConfig,
    pub tau: TauMode,
    pub variants: Vec<Variant>,
    pub epsilon: f64,
    /// Replace the mined mask with the ground-truth mask for pose and fusion.
    pub use_gt_mask: bool,
    /// Read passes, masks and trajectories from this directory instead of simulating.
    pub input_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub cloud_stride: usize,
    pub rpe_delta: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            noise: NoiseProfile::default(),
            cues: CueConfig::default(),
            tau: TauMode::Otsu,
            variants: Variant::ablation_rows(),
            epsilon: DEFAULT_EPSILON,
            use_gt_mask: false,
            input_dir: None,
            out_dir: None,
            seed: 0,
            cloud_stride: 1,
            rpe_delta: 1,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{key}: expected a boolean, found {v:?}")),
    }
}

fn parse_vec3(key: &str, v: &str) -> Result<Vec3, String> {
    let parts: Vec<f64> = v
        .split(',')
        .map(|p| parse_num::<f64>(key, p.trim()))
        .collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        return Err(format!("{key}: expected x,y,z in {v:?}"));
    }
    Ok(Vec3::new(parts[0], parts[1], parts[2]))
}

fn format_vec3(v: &Vec3) -> String {
    format!("{},{},{}", v.x, v.y, v.z)
}

impl PipelineConfig {
    /// Applies `key=value` overrides on top of the defaults. Unknown keys are
    /// errors.
    pub fn from_kv(kv: &KvMap) -> Result<Self, String> {
        let mut c = Self::default();
        let (mut focal, mut width, mut height) = (None, None, None);
        let (mut fx, mut fy, mut cx, mut cy) = (None, None, None, None);
        let mut pose_override = None;
        let mut variants = None;
        let mut miscal = (None, None);
        for (k, v) in kv {
            let v = v.as_str();
            match k.as_str() {
                "seed" => c.seed = parse_num(k, v)?,
                "scene.num_frames" => c.scene.num_frames = parse_num(k, v)?,
                "scene.num_static_points" => c.scene.num_static_points = parse_num(k, v)?,
                "scene.num_dynamic_points" => c.scene.num_dynamic_points = parse_num(k, v)?,
                "scene.width" => width = Some(parse_num(k, v)?),
                "scene.height" => height = Some(parse_num(k, v)?),
                "scene.focal" => focal = Some(parse_num(k, v)?),
                "scene.fx" => fx = Some(parse_num(k, v)?),
                "scene.fy" => fy = Some(parse_num(k, v)?),
                "scene.cx" => cx = Some(parse_num(k, v)?),
                "scene.cy" => cy = Some(parse_num(k, v)?),
                "scene.camera_path" => {
                    c.scene.camera_path = CameraPath::parse(v).ok_or_else(|| format!("{k}: unknown path {v:?}"))?
                }
                "scene.camera_amplitude" => c.scene.camera_amplitude = parse_num(k, v)?,
                "scene.velocities" => {
                    c.scene.object_velocities = v
                        .split(';')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| parse_vec3(k, s))
                        .collect::<Result<_, _>>()?
                }
                "scene.pixel_noise_sigma" => c.scene.pixel_noise_sigma = parse_num(k, v)?,
                "scene.wall_depth" => c.scene.wall_depth = parse_num(k, v)?,
                "scene.wall_relief" => c.scene.wall_relief = parse_num(k, v)?,
                "scene.object_depth" => c.scene.object_depth = parse_num(k, v)?,
                "noise.pass1.sigma_static" => c.noise.first.sigma_static = parse_num(k, v)?,
                "noise.pass1.sigma_dynamic" => c.noise.first.sigma_dynamic = parse_num(k, v)?,
                "noise.pass2.sigma_static" => c.noise.mask_aware.sigma_static = parse_num(k, v)?,
                "noise.pass2.sigma_dynamic" => c.noise.mask_aware.sigma_dynamic = parse_num(k, v)?,
                "noise.calibration_gain" => c.noise.calibration_gain = parse_num(k, v)?,
                "noise.miscalibration.fraction" => miscal.0 = Some(parse_num(k, v)?),
                "noise.miscalibration.multiplier" => miscal.1 = Some(parse_num(k, v)?),
                "cues.patch_size" => c.cues.patch_size = parse_num(k, v)?,
                "cues.num_layers" => c.cues.num_layers = parse_num(k, v)?,
                "cues.dim" => c.cues.dim = parse_num(k, v)?,
                "cues.layer_set" => {
                    c.cues.layer_set = v
                        .split(',')
                        .map(|s| parse_num::<usize>(k, s.trim()))
                        .collect::<Result<_, _>>()?
                }
                "cues.neighbor_radius" => c.cues.neighbor_radius = parse_num(k, v)?,
                "cues.l_mask" => c.cues.l_mask = parse_num(k, v)?,
                "cues.bins" => c.cues.bins = parse_num(k, v)?,
                "cues.projection_seed" => c.cues.projection_seed = parse_num(k, v)?,
                "cues.use_query_gram" => c.cues.use_query_gram = parse_bool(k, v)?,
                "cues.residual_gain" => c.cues.residual_gain = parse_num(k, v)?,
                "cues.temporal_phase" => c.cues.temporal_phase = parse_num(k, v)?,
                "cues.temperature" => c.cues.temperature = parse_num(k, v)?,
                "tau.mode" => {
                    c.tau = match v {
                        "otsu" => TauMode::Otsu,
                        "fixed" => TauMode::Fixed(match c.tau {
                            TauMode::Fixed(t) => t,
                            TauMode::Otsu => 0.5,
                        }),
                        _ => return Err(format!("{k}: expected otsu or fixed, found {v:?}")),
                    }
                }
                "tau.value" => {
                    let t: f64 = parse_num(k, v)?;
                    if let TauMode::Fixed(_) = c.tau {
                        c.tau = TauMode::Fixed(t);
                    } else if kv.get("tau.mode").map(String::as_str) == Some("fixed") {
                        c.tau = TauMode::Fixed(t);
                    }
                }
                "fusion.epsilon" => c.epsilon = parse_num(k, v)?,
                "fusion.variants" => variants = Some(v.to_string()),
                "pose.mode" => {
                    pose_override = match v {
                        "auto" => None,
                        "masked" => Some(PoseMode::Masked),
                        "unmasked" => Some(PoseMode::Unmasked),
                        _ => return Err(format!("{k}: expected auto, masked or unmasked, found {v:?}")),
                    }
                }
                "mask.use_gt" => c.use_gt_mask = parse_bool(k, v)?,
                "input.dir" => c.input_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
                "eval.stride" => c.cloud_stride = parse_num(k, v)?,
                "eval.rpe_delta" => c.rpe_delta = parse_num(k, v)?,
                _ => return Err(format!("unknown config key {k:?}")),
            }
        }
        // tau.value may precede tau.mode in key order
        if let (TauMode::Fixed(_), Some(v)) = (c.tau, kv.get("tau.value")) {
            c.tau = TauMode::Fixed(parse_num("tau.value", v)?);
        }
        let w = width.unwrap_or(c.scene.intrinsics.width);
        let h = height.unwrap_or(c.scene.intrinsics.height);
        let f = focal.unwrap_or(c.scene.intrinsics.fx);
        let base = Intrinsics::centered(f, w, h);
        c.scene.intrinsics = Intrinsics::new(
            fx.unwrap_or(base.fx),
            fy.unwrap_or(if focal.is_some() { f } else { base.fy }),
            cx.unwrap_or(base.cx),
            cy.unwrap_or(base.cy),
            w,
            h,
        )
        .map_err(|e| e.to_string())?;
        c.noise.miscalibration = match miscal {
            (None, None) => None,
            (Some(fraction), Some(multiplier)) => Some(Miscalibration { fraction, multiplier }),
            _ => return Err("noise.miscalibration needs both fraction and multiplier".into()),
        };
        if let Some(list) = variants {
            c.variants = list
                .split(',')
                .map(|s| Variant::parse(s.trim()).ok_or_else(|| format!("fusion.variants: unknown variant {s:?}")))
                .collect::<Result<_, _>>()?;
        }
        if let Some(p) = pose_override {
            c.variants.iter_mut().for_each(|v| v.pose = p);
        }
        c.scene.seed = c.seed;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.input_dir.is_none() {
            self.scene.validate().map_err(|e| e.to_string())?;
            self.noise.validate().map_err(|e| e.to_string())?;
        }
        self.cues.validate().map_err(|e| e.to_string())?;
        if self.variants.is_empty() {
            return Err("at least one variant is required".into());
        }
        if !(self.epsilon > 0.0) {
            return Err(format!("fusion.epsilon must be > 0, got {}", self.epsilon));
        }
        if self.cloud_stride == 0 {
            return Err("eval.stride must be >= 1".into());
        }
        if self.rpe_delta == 0 {
            return Err("eval.rpe_delta must be >= 1".into());
        }
        if let TauMode::Fixed(t) = self.tau {
            if !t.is_finite() {
                return Err("tau.value must be finite".into());
            }
        }
        Ok(())
    }

    /// Full key=value echo; parsing it back yields an equal config.
    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let s = &self.scene;
        let k = &s.intrinsics;
        put("seed", self.seed.to_string());
        put("scene.num_frames", s.num_frames.to_string());
        put("scene.num_static_points", s.num_static_points.to_string());
        put("scene.num_dynamic_points", s.num_dynamic_points.to_string());
        put("scene.width", k.width.to_string());
        put("scene.height", k.height.to_string());
        put("scene.fx", k.fx.to_string());
        put("scene.fy", k.fy.to_string());
        put("scene.cx", k.cx.to_string());
        put("scene.cy", k.cy.to_string());
        put("scene.camera_path", s.camera_path.name().to_string());
        put("scene.camera_amplitude", s.camera_amplitude.to_string());
        put(
            "scene.velocities",
            s.object_velocities
                .iter()
                .map(format_vec3)
                .collect::<Vec<_>>()
                .join(";"),
        );
        put("scene.pixel_noise_sigma", s.pixel_noise_sigma.to_string());
        put("scene.wall_depth", s.wall_depth.to_string());
        put("scene.wall_relief", s.wall_relief.to_string());
        put("scene.object_depth", s.object_depth.to_string());
        let n = &self.noise;
        put("noise.pass1.sigma_static", n.first.sigma_static.to_string());
        put("noise.pass1.sigma_dynamic", n.first.sigma_dynamic.to_string());
        put("noise.pass2.sigma_static", n.mask_aware.sigma_static.to_string());
        put("noise.pass2.sigma_dynamic", n.mask_aware.sigma_dynamic.to_string());
        put("noise.calibration_gain", n.calibration_gain.to_string());
        if let Some(mc) = n.miscalibration {
            put("noise.miscalibration.fraction", mc.fraction.to_string());
            put("noise.miscalibration.multiplier", mc.multiplier.to_string());
        }
        let c = &self.cues;
        put("cues.patch_size", c.patch_size.to_string());
        put("cues.num_layers", c.num_layers.to_string());
        put("cues.dim", c.dim.to_string());
        put(
            "cues.layer_set",
            c.layer_set.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(","),
        );
        put("cues.neighbor_radius", c.neighbor_radius.to_string());
        put("cues.l_mask", c.l_mask.to_string());
        put("cues.bins", c.bins.to_string());
        put("cues.projection_seed", c.projection_seed.to_string());
        put("cues.use_query_gram", c.use_query_gram.to_string());
        put("cues.residual_gain", c.residual_gain.to_string());
        put("cues.temporal_phase", c.temporal_phase.to_string());
        put("cues.temperature", c.temperature.to_string());
        match self.tau {
            TauMode::Otsu => put("tau.mode", "otsu".into()),
            TauMode::Fixed(t) => {
                put("tau.mode", "fixed".into());
                put("tau.value", t.to_string());
            }
        }
        put("fusion.epsilon", self.epsilon.to_string());
        put(
            "fusion.variants",
            self.variants.iter().map(|v| v.name()).collect::<Vec<_>>().join(","),
        );
        put("mask.use_gt", self.use_gt_mask.to_string());
        if let Some(d) = &self.input_dir {
            put("input.dir", d.display().to_string());
        }
        put("eval.stride", self.cloud_stride.to_string());
        put("eval.rpe_delta", self.rpe_delta.to_string());
        m
    }
}
