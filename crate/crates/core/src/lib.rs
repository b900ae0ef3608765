//! Two-pass pose/geometry decoupling for dynamic-scene 4D reconstruction,
//! checked against a synthetic dynamic-scene oracle.
//!
//! Modules follow the data flow: [`synthscene`] renders ground truth and two
//! noisy passes, [`cues`] mines a dynamic saliency map from toy attention
//! tokens, [`pose`] solves weighted rigid registration per frame pair,
//! [`fusion`] composes the two depth passes, [`metrics`] scores the result and
//! [`pipeline`] wires the stages to files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cues;
pub mod densemap;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod pose;
pub mod rng;
pub mod synthscene;

pub use cues::{CueConfig, CueError, SaliencyMap, TokenGrid};
pub use densemap::{DenseMap, MapError, MapRole};
pub use fusion::{FusedDepth, FusionError, FusionMode, RegionPartition};
pub use geometry::{CameraPose, GeometryError, Intrinsics, Mat3, Vec2, Vec3};
pub use io::IoError;
pub use metrics::{ChamferStats, MetricError, MetricReport, NeighborSearch, PointCloud};
pub use pipeline::{
    ablation_sweep, run_pipeline, AblationReport, PipelineConfig, PipelineError, ReportFormat, RunReport, Variant,
};
pub use pose::{PoseError, Trajectory, WeightedCorrespondenceSet};
pub use synthscene::{NoiseProfile, Observation, PassId, PassPrediction, SceneConfig, SceneError, SceneTruth};
