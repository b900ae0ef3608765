//! Two-pass orchestration: simulate or load passes, mine motion cues, estimate
//! pose with and without the mask, compose depth per variant, evaluate.

mod ablation;
mod config;
mod persist;
mod report;
mod staged;

pub use ablation::{ablation_sweep, interpolated_quantile, AblationReport, AblationRow, SeedFailure};
pub use config::{DepthSource, PipelineConfig, PoseMode, TauMode, Variant};
pub use persist::{
    format_observations, parse_observations, read_attention, read_kv_file, read_maps, read_observations, read_pass,
    read_tau, write_attention, write_kv_file, write_maps, write_observations, write_pass, write_tau, write_variant,
    RunLayout,
};
pub use report::{ReportFormat, RunReport, VariantResult};
pub use staged::{eval_dir, fuse_dir, mine_dir, pose_dir, run_dir_config, simulate_dir};

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::cues::{
    aggregate_saliency, attention_forward, dynamic_tokens, encode_tokens_with, otsu_threshold, patch_features,
    reprojection_residuals, suppress_keys, CueError, PairMass, Projections, TokenGrid,
};
use crate::densemap::{DenseMap, MapRole};
use crate::fusion::{fuse_confidence, hard_replace, partition_regions, report_line, FusionError};
use crate::geometry::Intrinsics;
use crate::io::{read_trajectory, write_file, write_trajectory, IoError};
use crate::metrics::{ate, chamfer, roc_auc, rpe, unproject_cloud, MetricError, MetricReport, PointCloud};
use crate::pose::{estimate_trajectory, PoseError, Trajectory};
use crate::synthscene::{corrupt_pass, generate_scene, Observation, PassId, PassPrediction, SceneError, SceneTruth};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Fixed threshold applied to the 0/1 ground-truth mask.
pub const GT_MASK_TAU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage}{}: {message}", frame.map(|f| format!(" (frame {f})")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        frame: Option<usize>,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

impl PipelineError {
    fn stage(stage: &'static str, frame: Option<usize>, message: impl ToString) -> Self {
        PipelineError::Stage {
            stage,
            frame,
            message: message.to_string(),
        }
    }

    fn cue(e: CueError) -> Self {
        let frame = match e {
            CueError::EmptyFrame(f) | CueError::NoNeighbors(f) => Some(f),
            _ => None,
        };
        Self::stage("mine", frame, e)
    }

    fn pose(stage: &'static str, e: PoseError) -> Self {
        let frame = match e {
            PoseError::AtFrame { frame, .. } => Some(frame),
            _ => None,
        };
        Self::stage(stage, frame, e)
    }

    fn fusion(frame: usize, e: FusionError) -> Self {
        Self::stage("fuse", Some(frame), e)
    }

    fn metric(e: MetricError) -> Self {
        Self::stage("eval", None, e)
    }

    fn scene(e: SceneError) -> Self {
        Self::stage("simulate", None, e)
    }
}

/// Ground truth needed for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub intrinsics: Intrinsics,
    pub trajectory: Trajectory,
    pub depths: Vec<DenseMap>,
    pub masks: Vec<DenseMap>,
}

impl GroundTruth {
    pub fn from_scene(truth: &SceneTruth) -> Result<Self, PipelineError> {
        let trajectory = Trajectory::new(truth.trajectory.clone())
            .map_err(|e| PipelineError::pose("simulate", e))?
            .canonicalized();
        Ok(Self {
            intrinsics: *truth.intrinsics(),
            trajectory,
            depths: truth.depth_maps(),
            masks: truth.dynamic_masks(),
        })
    }

    pub fn cloud(&self, stride: usize) -> Result<PointCloud, PipelineError> {
        unproject_cloud(&self.depths, &self.trajectory, &self.intrinsics, stride).map_err(PipelineError::metric)
    }
}

/// Scene truth plus both simulated passes.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub truth: SceneTruth,
    pub pass1: Vec<PassPrediction>,
    pub pass2: Vec<PassPrediction>,
}

impl Simulation {
    pub fn observations(&self) -> Vec<Vec<Observation>> {
        self.truth.frames.iter().map(|f| f.observations.clone()).collect()
    }
}

pub fn simulate(config: &PipelineConfig) -> Result<Simulation, PipelineError> {
    let mut scene = config.scene.clone();
    scene.seed = config.seed;
    let truth = generate_scene(&scene).map_err(PipelineError::scene)?;
    let pass1 = corrupt_pass(&truth, PassId::First, &config.noise, config.seed).map_err(PipelineError::scene)?;
    let pass2 = corrupt_pass(&truth, PassId::MaskAware, &config.noise, config.seed).map_err(PipelineError::scene)?;
    Ok(Simulation { truth, pass1, pass2 })
}

/// Attention mass on dynamic tokens, per ordered frame pair, before and after
/// key suppression.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDiagnostic {
    pub before: Vec<PairMass>,
    pub after: Vec<PairMass>,
    pub mean_before: f64,
    pub mean_after: f64,
}

impl AttentionDiagnostic {
    pub fn from_pairs(before: Vec<PairMass>, after: Vec<PairMass>) -> Self {
        let mean = |v: &[PairMass]| v.iter().map(|p| p.mass).sum::<f64>() / v.len() as f64;
        Self {
            mean_before: mean(&before),
            mean_after: mean(&after),
            before,
            after,
        }
    }

    /// Pairs whose mass did not strictly decrease.
    pub fn non_decreasing_pairs(&self) -> Vec<(usize, usize)> {
        self.before
            .iter()
            .zip(&self.after)
            .filter(|(b, a)| !(a.mass < b.mass))
            .map(|(b, _)| (b.query_frame, b.key_frame))
            .collect()
    }
}

/// Output of cue mining.
#[derive(Debug, Clone, PartialEq)]
pub struct MinedCues {
    /// Pixel saliency in `[0, 1]`, −1 where pass-1 depth is undefined.
    pub saliency: Vec<DenseMap>,
    pub token_saliency: Vec<DenseMap>,
    pub tau: f64,
    pub attention: AttentionDiagnostic,
}

/// Pose from observations; with `mask` the weights are `1 − mask`.
pub fn estimate_pose(
    observations: &[Vec<Observation>],
    mask: Option<&[DenseMap]>,
    k: &Intrinsics,
    stage: &'static str,
) -> Result<Trajectory, PipelineError> {
    let traj = estimate_trajectory(observations, mask.unwrap_or(&[]), k, mask.is_some())
        .map_err(|e| PipelineError::pose(stage, e))?;
    Ok(traj.canonicalized())
}

/// Threshold over the pooled defined saliency of all frames.
pub fn select_tau(mode: TauMode, saliency: &[DenseMap], bins: usize) -> f64 {
    match mode {
        TauMode::Fixed(t) => t,
        TauMode::Otsu => {
            let pooled: Vec<f64> = saliency.iter().flat_map(|m| m.defined_values()).collect();
            otsu_threshold(&pooled, bins)
        }
    }
}

/// ROC AUC of saliency against a ground-truth mask over pixels where both
/// are defined.
pub fn saliency_auc(saliency: &[DenseMap], gt_masks: &[DenseMap]) -> Option<f64> {
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (s, m) in saliency.iter().zip(gt_masks) {
        for (sv, mv) in s.data().iter().zip(m.data()) {
            if *sv >= 0.0 && *mv >= 0.0 {
                scores.push(*sv);
                labels.push(*mv > 0.5);
            }
        }
    }
    roc_auc(&scores, &labels)
}

/// Token grids from pass-1 depth and residuals of matched observations
/// warped with the pass-1 trajectory. Frame 0 uses frame 1 as reference.
pub fn token_grids(
    config: &PipelineConfig,
    k: &Intrinsics,
    observations: &[Vec<Observation>],
    pass1: &[PassPrediction],
    traj1: &Trajectory,
) -> Result<Vec<TokenGrid>, PipelineError> {
    let n = pass1.len();
    if n < 2 || observations.len() != n || traj1.len() != n {
        return Err(PipelineError::stage(
            "mine",
            None,
            format!(
                "need >= 2 frames with matching counts, got {n} passes, {} observation frames, {} poses",
                observations.len(),
                traj1.len()
            ),
        ));
    }
    let proj = Projections::new(&config.cues);
    (0..n)
        .into_par_iter()
        .map(|t| {
            let r = if t == 0 { 1 } else { t - 1 };
            let rel = traj1.relative(r, t);
            let res = reprojection_residuals(&observations[r], &observations[t], &pass1[r].depth, &rel, k);
            let feats = patch_features(&pass1[t].depth, &res, t, &config.cues);
            encode_tokens_with(&feats, &proj, &config.cues).map_err(PipelineError::cue)
        })
        .collect()
}

/// Saliency, threshold and the attention diagnostic.
pub fn mine_cues(
    config: &PipelineConfig,
    k: &Intrinsics,
    observations: &[Vec<Observation>],
    pass1: &[PassPrediction],
    traj1: &Trajectory,
) -> Result<MinedCues, PipelineError> {
    let grids = token_grids(config, k, observations, pass1, traj1)?;
    let maps = (0..grids.len())
        .into_par_iter()
        .map(|r| aggregate_saliency(&grids, r, &config.cues).map_err(PipelineError::cue))
        .collect::<Result<Vec<_>, _>>()?;
    let saliency: Vec<DenseMap> = maps
        .iter()
        .zip(pass1)
        .map(|(m, p)| {
            let mut s = m.upsampled.clone();
            for (v, d) in s.data_mut().iter_mut().zip(p.depth.data()) {
                if !(*d > 0.0) {
                    *v = MapRole::Saliency.sentinel();
                }
            }
            s.quantize_f32()
        })
        .collect();
    let tau = select_tau(config.tau, &saliency, config.cues.bins);
    let token_saliency: Vec<DenseMap> = maps.into_iter().map(|m| m.tokens).collect();
    let flags: Vec<Vec<bool>> = token_saliency.iter().map(|m| dynamic_tokens(m, tau)).collect();
    let before = attention_forward(&grids, &flags, &config.cues).map_err(PipelineError::cue)?;
    let suppressed = grids
        .iter()
        .zip(&token_saliency)
        .map(|(g, m)| suppress_keys(g, m, tau, config.cues.l_mask).map_err(PipelineError::cue))
        .collect::<Result<Vec<_>, _>>()?;
    let after = attention_forward(&suppressed, &flags, &config.cues).map_err(PipelineError::cue)?;
    Ok(MinedCues {
        saliency,
        token_saliency,
        tau,
        attention: AttentionDiagnostic::from_pairs(before.pair_mass, after.pair_mass),
    })
}

/// Depth per frame for one variant, plus fusion report lines for the
/// composing variants.
pub fn compose_depth(
    source: DepthSource,
    pass1: &[PassPrediction],
    pass2: &[PassPrediction],
    masks: &[DenseMap],
    tau: f64,
    epsilon: f64,
) -> Result<(Vec<DenseMap>, Vec<String>), PipelineError> {
    let n = pass1.len();
    if pass2.len() != n || masks.len() != n {
        return Err(PipelineError::stage(
            "fuse",
            None,
            format!(
                "frame counts differ: pass1 {n}, pass2 {}, masks {}",
                pass2.len(),
                masks.len()
            ),
        ));
    }
    match source {
        DepthSource::Pass1Only => Ok((pass1.iter().map(|p| p.depth.clone()).collect(), Vec::new())),
        DepthSource::Pass2Only => Ok((pass2.iter().map(|p| p.depth.clone()).collect(), Vec::new())),
        DepthSource::HardReplace | DepthSource::ConfidenceFused => {
            let per_frame = (0..n)
                .into_par_iter()
                .map(|f| {
                    let part = partition_regions(&masks[f], tau);
                    let (a, b) = (&pass1[f], &pass2[f]);
                    let fused = if source == DepthSource::HardReplace {
                        hard_replace(&a.depth, &b.depth, &a.confidence, &b.confidence, &part)
                    } else {
                        fuse_confidence(&a.depth, &b.depth, &a.confidence, &b.confidence, &part, epsilon)
                    }
                    .map_err(|e| PipelineError::fusion(f, e))?;
                    let line = report_line(f, &fused, &part);
                    // persisted depth is f32, so evaluation uses the same values
                    Ok((fused.depth.quantize_f32(), line))
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            Ok(per_frame.into_iter().unzip())
        }
    }
}

/// Metrics of a depth sequence and trajectory against the ground truth cloud.
pub fn evaluate_variant(
    depths: &[DenseMap],
    traj: &Trajectory,
    gt: &GroundTruth,
    gt_cloud: &PointCloud,
    stride: usize,
    rpe_delta: usize,
) -> Result<(MetricReport, PointCloud), PipelineError> {
    let pred = unproject_cloud(depths, traj, &gt.intrinsics, stride).map_err(PipelineError::metric)?;
    let c = chamfer(&pred, gt_cloud).map_err(PipelineError::metric)?;
    let a = ate(traj, &gt.trajectory).map_err(PipelineError::metric)?;
    let (rte, rre) = rpe(traj, &gt.trajectory, rpe_delta).map_err(PipelineError::metric)?;
    Ok((MetricReport::from_parts(c, a, rte, rre), pred))
}

/// Everything fusion and evaluation need; produced in memory or loaded from
/// a run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct StageInputs {
    pub pass1: Vec<PassPrediction>,
    pub pass2: Vec<PassPrediction>,
    pub saliency: Vec<DenseMap>,
    pub unmasked: Option<Trajectory>,
    pub masked: Option<Trajectory>,
    pub gt: GroundTruth,
    pub attention: Option<AttentionDiagnostic>,
}

impl StageInputs {
    pub fn num_frames(&self) -> usize {
        self.pass1.len()
    }

    /// Mask and threshold used for partitioning: mined saliency by default,
    /// the ground-truth mask on request.
    pub fn fusion_mask(&self, config: &PipelineConfig) -> (&[DenseMap], f64) {
        if config.use_gt_mask {
            (&self.gt.masks, GT_MASK_TAU)
        } else {
            (&self.saliency, select_tau(config.tau, &self.saliency, config.cues.bins))
        }
    }

    pub fn trajectory(&self, pose: PoseMode) -> Result<&Trajectory, PipelineError> {
        match pose {
            PoseMode::Masked => self.masked.as_ref(),
            PoseMode::Unmasked => self.unmasked.as_ref(),
        }
        .ok_or_else(|| PipelineError::stage("eval", None, format!("no {} trajectory available", pose.name())))
    }

    /// Loads the external-input contract from `dir`: `pass1/`, `pass2/`,
    /// `mask/`, `traj_pass2.txt` (and `traj_pass1.txt` if present), plus
    /// `scene.cfg`, `trajectory_gt.txt` and `gt/` for evaluation.
    pub fn load(dir: &std::path::Path) -> Result<Self, PipelineError> {
        let layout = RunLayout::new(dir);
        let n = layout.count_frames(|f| layout.pass_depth(PassId::First, f));
        if n == 0 {
            return Err(PipelineError::Config(format!(
                "{}: no pass1/depth_0000.dtm",
                dir.display()
            )));
        }
        let scene_kv = read_kv_file(&layout.scene_cfg())?;
        let scene = PipelineConfig::from_kv(&scene_kv).map_err(PipelineError::Config)?;
        let optional = |p: std::path::PathBuf| -> Result<Option<Trajectory>, PipelineError> {
            if p.is_file() {
                Ok(Some(read_trajectory(&p)?))
            } else {
                Ok(None)
            }
        };
        let inputs = Self {
            pass1: read_pass(&layout, PassId::First, n)?,
            pass2: read_pass(&layout, PassId::MaskAware, n)?,
            saliency: read_maps(|f| layout.saliency(f), n, MapRole::Saliency)?,
            unmasked: optional(layout.trajectory(PassId::First))?,
            masked: Some(read_trajectory(&layout.trajectory(PassId::MaskAware))?),
            gt: GroundTruth {
                intrinsics: scene.scene.intrinsics,
                trajectory: read_trajectory(&layout.gt_trajectory())?,
                depths: read_maps(|f| layout.gt_depth(f), n, MapRole::Depth)?,
                masks: read_maps(|f| layout.gt_mask(f), n, MapRole::Mask)?,
            },
            attention: if layout.attention().is_file() {
                Some(read_attention(&layout)?)
            } else {
                None
            },
        };
        Ok(inputs)
    }
}

struct Timer(Vec<(&'static str, f64)>, Instant);

impl Timer {
    fn new() -> Self {
        Self(Vec::new(), Instant::now())
    }

    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.0.push((stage, (now - self.1).as_secs_f64() * 1e3));
        self.1 = now;
    }
}

/// Runs simulate, mine and pose, persisting each stage as it finishes when
/// `layout` is given.
pub fn produce_inputs(
    config: &PipelineConfig,
    layout: Option<&RunLayout>,
    timer_out: &mut Vec<(&'static str, f64)>,
) -> Result<StageInputs, PipelineError> {
    let mut timer = Timer::new();
    let sim = simulate(config)?;
    let gt = GroundTruth::from_scene(&sim.truth)?;
    let k = gt.intrinsics;
    let observations = sim.observations();
    if let Some(l) = layout {
        persist_simulation(l, config, &sim, &gt)?;
    }
    timer.lap("simulate");

    let unmasked = estimate_pose(&observations, None, &k, "mine")?;
    if let Some(l) = layout {
        write_trajectory(&l.trajectory(PassId::First), &unmasked)?;
    }
    let cues = mine_cues(config, &k, &observations, &sim.pass1, &unmasked)?;
    if let Some(l) = layout {
        write_cues(l, &cues)?;
    }
    timer.lap("mine");

    let pose_mask = if config.use_gt_mask { &gt.masks } else { &cues.saliency };
    let masked = estimate_pose(&observations, Some(pose_mask), &k, "pose")?;
    if let Some(l) = layout {
        write_trajectory(&l.trajectory(PassId::MaskAware), &masked)?;
    }
    timer.lap("pose");
    timer_out.extend(timer.0);
    Ok(StageInputs {
        pass1: sim.pass1,
        pass2: sim.pass2,
        saliency: cues.saliency,
        unmasked: Some(unmasked),
        masked: Some(masked),
        gt,
        attention: Some(cues.attention),
    })
}

/// Writes the simulator outputs: config echo, ground truth, observations and
/// both passes.
pub fn persist_simulation(
    layout: &RunLayout,
    config: &PipelineConfig,
    sim: &Simulation,
    gt: &GroundTruth,
) -> Result<(), PipelineError> {
    let mut echo = config.clone();
    echo.input_dir = None;
    echo.out_dir = None;
    write_kv_file(&layout.scene_cfg(), &echo.to_kv())?;
    write_trajectory(&layout.gt_trajectory(), &gt.trajectory)?;
    write_maps(|f| layout.gt_depth(f), &gt.depths)?;
    write_maps(|f| layout.gt_mask(f), &gt.masks)?;
    let frames: Vec<&[Observation]> = sim.truth.frames.iter().map(|f| f.observations.as_slice()).collect();
    write_observations(layout, &frames)?;
    write_pass(layout, &sim.pass1)?;
    write_pass(layout, &sim.pass2)?;
    Ok(())
}

/// Fuses and evaluates every requested variant.
pub fn fuse_and_evaluate(
    config: &PipelineConfig,
    inputs: &StageInputs,
    layout: Option<&RunLayout>,
) -> Result<Vec<VariantResult>, PipelineError> {
    let (masks, tau) = inputs.fusion_mask(config);
    let gt_cloud = inputs.gt.cloud(config.cloud_stride)?;
    let mut out = Vec::with_capacity(config.variants.len());
    for v in &config.variants {
        let (depths, lines) = compose_depth(v.depth, &inputs.pass1, &inputs.pass2, masks, tau, config.epsilon)?;
        let traj = inputs.trajectory(v.pose)?;
        let (metrics, cloud) = evaluate_variant(
            &depths,
            traj,
            &inputs.gt,
            &gt_cloud,
            config.cloud_stride,
            config.rpe_delta,
        )?;
        if let Some(l) = layout {
            write_variant(l, v, &depths, &lines, Some(&cloud))?;
        }
        out.push(VariantResult {
            variant: *v,
            metrics,
            fusion_lines: lines,
        });
    }
    Ok(out)
}

/// Full pipeline. Writes every intermediate and the report when
/// `config.out_dir` is set.
pub fn run_pipeline(config: &PipelineConfig, format: ReportFormat) -> Result<RunReport, PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    let layout = config.out_dir.as_ref().map(RunLayout::new);
    let mut timings = Vec::new();
    let inputs = match &config.input_dir {
        Some(dir) => {
            let start = Instant::now();
            let inputs = StageInputs::load(dir)?;
            timings.push(("load", start.elapsed().as_secs_f64() * 1e3));
            inputs
        }
        None => produce_inputs(config, layout.as_ref(), &mut timings)?,
    };
    let start = Instant::now();
    let variants = fuse_and_evaluate(config, &inputs, layout.as_ref())?;
    timings.push(("fuse+eval", start.elapsed().as_secs_f64() * 1e3));
    let report = assemble_report(config, &inputs, variants, timings);
    if let Some(l) = &layout {
        write_report(l, &report, format)?;
    }
    Ok(report)
}

pub fn assemble_report(
    config: &PipelineConfig,
    inputs: &StageInputs,
    variants: Vec<VariantResult>,
    timings_ms: Vec<(&'static str, f64)>,
) -> RunReport {
    RunReport {
        version: VERSION.to_string(),
        seed: config.seed,
        num_frames: inputs.num_frames(),
        tau: inputs.fusion_mask(config).1,
        saliency_auc: saliency_auc(&inputs.saliency, &inputs.gt.masks),
        attention: inputs.attention.clone(),
        variants,
        timings_ms,
        config_echo: config.to_kv(),
    }
}

pub fn write_report(layout: &RunLayout, report: &RunReport, format: ReportFormat) -> Result<(), PipelineError> {
    write_file(
        &layout.report(format == ReportFormat::Csv),
        report.render(format).as_bytes(),
    )?;
    Ok(())
}

/// Saliency maps, threshold and attention diagnostic of the cue stage.
pub fn write_cues(layout: &RunLayout, cues: &MinedCues) -> Result<(), PipelineError> {
    write_maps(|f| layout.saliency(f), &cues.saliency)?;
    write_tau(layout, cues.tau)?;
    write_attention(layout, &cues.attention)?;
    Ok(())
}
