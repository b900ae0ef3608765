//! Single stages that read their inputs from, and write their outputs to, a
//! run directory. Chaining them reproduces [`run_pipeline`](super::run_pipeline).

use std::path::Path;

use crate::densemap::MapRole;
use crate::io::{write_ply, write_trajectory};
use crate::pose::Trajectory;
use crate::synthscene::PassId;

use super::report::{ReportFormat, RunReport, VariantResult};
use super::{
    assemble_report, compose_depth, estimate_pose, evaluate_variant, mine_cues, persist_simulation, read_kv_file,
    read_maps, read_observations, read_pass, saliency_auc, select_tau, simulate, write_cues, write_report,
    write_variant, GroundTruth, MinedCues, PipelineConfig, PipelineError, RunLayout, Simulation, StageInputs,
    GT_MASK_TAU,
};

/// The config echoed into `scene.cfg` by `simulate`.
pub fn run_dir_config(dir: &Path) -> Result<PipelineConfig, PipelineError> {
    let kv = read_kv_file(&RunLayout::new(dir).scene_cfg())?;
    PipelineConfig::from_kv(&kv).map_err(PipelineError::Config)
}

fn frame_count(layout: &RunLayout) -> Result<usize, PipelineError> {
    match layout.count_frames(|f| layout.pass_depth(PassId::First, f)) {
        0 => Err(PipelineError::Config(format!(
            "{}: no pass1/depth_0000.dtm; run simulate first",
            layout.root.display()
        ))),
        n => Ok(n),
    }
}

pub fn simulate_dir(config: &PipelineConfig, dir: &Path) -> Result<Simulation, PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    let sim = simulate(config)?;
    let gt = GroundTruth::from_scene(&sim.truth)?;
    persist_simulation(&RunLayout::new(dir), config, &sim, &gt)?;
    Ok(sim)
}

/// Unmasked pose and cue mining. Returns the cues and, when ground-truth masks
/// are present, the saliency AUC.
pub fn mine_dir(config: &PipelineConfig, dir: &Path) -> Result<(MinedCues, Option<f64>), PipelineError> {
    let layout = RunLayout::new(dir);
    let n = frame_count(&layout)?;
    let k = config.scene.intrinsics;
    let observations = read_observations(&layout, n)?;
    let pass1 = read_pass(&layout, PassId::First, n)?;
    let unmasked = estimate_pose(&observations, None, &k, "mine")?;
    write_trajectory(&layout.trajectory(PassId::First), &unmasked)?;
    let cues = mine_cues(config, &k, &observations, &pass1, &unmasked)?;
    write_cues(&layout, &cues)?;
    let auc = if layout.gt_mask(0).is_file() {
        saliency_auc(&cues.saliency, &read_maps(|f| layout.gt_mask(f), n, MapRole::Mask)?)
    } else {
        None
    };
    Ok((cues, auc))
}

/// Mask-weighted pose from the mined saliency, or the ground-truth mask.
pub fn pose_dir(config: &PipelineConfig, dir: &Path) -> Result<Trajectory, PipelineError> {
    let layout = RunLayout::new(dir);
    let n = frame_count(&layout)?;
    let observations = read_observations(&layout, n)?;
    let masks = if config.use_gt_mask {
        read_maps(|f| layout.gt_mask(f), n, MapRole::Mask)?
    } else {
        read_maps(|f| layout.saliency(f), n, MapRole::Saliency)?
    };
    let traj = estimate_pose(&observations, Some(&masks), &config.scene.intrinsics, "pose")?;
    write_trajectory(&layout.trajectory(PassId::MaskAware), &traj)?;
    Ok(traj)
}

/// Composes depth for every configured variant and writes `fused/<variant>/`.
pub fn fuse_dir(config: &PipelineConfig, dir: &Path) -> Result<Vec<(super::Variant, Vec<String>)>, PipelineError> {
    let layout = RunLayout::new(dir);
    let n = frame_count(&layout)?;
    let pass1 = read_pass(&layout, PassId::First, n)?;
    let pass2 = read_pass(&layout, PassId::MaskAware, n)?;
    let (masks, tau) = if config.use_gt_mask {
        (read_maps(|f| layout.gt_mask(f), n, MapRole::Mask)?, GT_MASK_TAU)
    } else {
        let s = read_maps(|f| layout.saliency(f), n, MapRole::Saliency)?;
        let tau = select_tau(config.tau, &s, config.cues.bins);
        (s, tau)
    };
    config
        .variants
        .iter()
        .map(|v| {
            let (depths, lines) = compose_depth(v.depth, &pass1, &pass2, &masks, tau, config.epsilon)?;
            write_variant(&layout, v, &depths, &lines, None)?;
            Ok((*v, lines))
        })
        .collect()
}

/// Evaluates the persisted fused depth of every configured variant and
/// writes the clouds and the report.
pub fn eval_dir(config: &PipelineConfig, dir: &Path, format: ReportFormat) -> Result<RunReport, PipelineError> {
    let layout = RunLayout::new(dir);
    let inputs = StageInputs::load(dir)?;
    let n = inputs.num_frames();
    let gt_cloud = inputs.gt.cloud(config.cloud_stride)?;
    let mut variants = Vec::new();
    for v in &config.variants {
        let depths = read_maps(|f| layout.fused_depth(v, f), n, MapRole::Depth)?;
        let traj = inputs.trajectory(v.pose)?;
        let (metrics, cloud) = evaluate_variant(
            &depths,
            traj,
            &inputs.gt,
            &gt_cloud,
            config.cloud_stride,
            config.rpe_delta,
        )?;
        write_ply(&layout.cloud(v), &cloud)?;
        let fusion_lines = match std::fs::read_to_string(layout.fusion_report(v)) {
            Ok(text) => text
                .lines()
                .filter(|l| !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
            Err(_) => Vec::new(),
        };
        variants.push(VariantResult {
            variant: *v,
            metrics,
            fusion_lines,
        });
    }
    let report = assemble_report(config, &inputs, variants, Vec::new());
    write_report(&layout, &report, format)?;
    Ok(report)
}
