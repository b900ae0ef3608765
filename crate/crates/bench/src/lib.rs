//! Shared fixtures for the benchmarks.

use dyn4d::pipeline::{estimate_pose, simulate, GroundTruth, PipelineConfig, Simulation};
use dyn4d::{PipelineError, Trajectory};

pub struct Fixture {
    pub config: PipelineConfig,
    pub sim: Simulation,
    pub gt: GroundTruth,
    pub unmasked: Trajectory,
}

/// Default scene with `num_frames` frames, simulated and posed without a mask.
pub fn fixture(num_frames: usize) -> Result<Fixture, PipelineError> {
    let mut config = PipelineConfig::default();
    config.scene.num_frames = num_frames;
    let sim = simulate(&config)?;
    let gt = GroundTruth::from_scene(&sim.truth)?;
    let unmasked = estimate_pose(&sim.observations(), None, &gt.intrinsics, "pose")?;
    Ok(Fixture {
        config,
        sim,
        gt,
        unmasked,
    })
}
