//! Motion cues from a toy attention stack.
//!
//! Each frame is summarised into patch tokens built from geometric features.
//! Tokens that find no good key-space match in neighbouring frames are
//! flagged as moving; the resulting saliency is thresholded with Otsu's method
//! and the flagged keys can be suppressed in early layers.

mod attention;
mod features;
mod gram;
mod otsu;

pub use attention::{attention_forward, dynamic_tokens, suppress_keys, AttentionOutput, PairMass};
pub use features::{patch_features, reprojection_residuals, PatchFeatures, FEATURE_DIM};
pub use gram::{aggregate_saliency, gram_similarity, SaliencyMap};
pub use otsu::{binarize, otsu_threshold, DEGENERATE_OFFSET};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::rng::{substream, TAG_PROJECTION};
use rand_distr::{Distribution, Normal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CueError {
    #[error("frame {0} has no patch with defined depth")]
    EmptyFrame(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("frame {0} has no temporal neighbours within the configured radius")]
    NoNeighbors(usize),
    #[error("mask is {got_h}x{got_w} but the token grid is {want_h}x{want_w}")]
    ResolutionMismatch {
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },
    #[error("invalid cue config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CueConfig {
    pub patch_size: usize,
    pub num_layers: usize,
    pub dim: usize,
    /// Layers (0-based) whose key Gram matrices feed the saliency.
    pub layer_set: Vec<usize>,
    pub neighbor_radius: usize,
    /// Keys are suppressed in the first `l_mask` layers.
    pub l_mask: usize,
    pub bins: usize,
    pub projection_seed: u64,
    /// Also average in the query-query Gram term.
    pub use_query_gram: bool,
    /// Scale applied to the reprojection residual feature (per pixel).
    pub residual_gain: f64,
    /// Per-frame rotation (radians) applied to the residual feature.
    pub temporal_phase: f64,
    pub temperature: f64,
}

impl Default for CueConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            num_layers: 6,
            dim: 32,
            layer_set: (0..6).collect(),
            neighbor_radius: 2,
            l_mask: 5,
            bins: 256,
            projection_seed: 0,
            use_query_gram: false,
            residual_gain: 3.0,
            temporal_phase: std::f64::consts::FRAC_PI_2,
            temperature: 1.0,
        }
    }
}

impl CueConfig {
    pub fn validate(&self) -> Result<(), CueError> {
        let bad = |m: String| Err(CueError::InvalidConfig(m));
        if self.patch_size == 0 || self.num_layers == 0 || self.dim == 0 {
            return bad("patch_size, num_layers and dim must be > 0".into());
        }
        if self.l_mask > self.num_layers {
            return bad(format!("l_mask {} exceeds num_layers {}", self.l_mask, self.num_layers));
        }
        if self.bins < 2 {
            return bad(format!("bins must be >= 2, got {}", self.bins));
        }
        if self.layer_set.is_empty() || self.layer_set.iter().any(|l| *l >= self.num_layers) {
            return bad("layer_set must be a nonempty subset of the layers".into());
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be > 0".into());
        }
        if !self.residual_gain.is_finite() || !self.temporal_phase.is_finite() {
            return bad("residual_gain and temporal_phase must be finite".into());
        }
        Ok(())
    }
}

/// Per-layer queries and keys over the patch tokens of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub frame_id: usize,
    pub tokens_h: usize,
    pub tokens_w: usize,
    pub patch_size: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub queries: Vec<DMatrix<f64>>,
    pub keys: Vec<DMatrix<f64>>,
}

impl TokenGrid {
    pub fn num_tokens(&self) -> usize {
        self.tokens_h * self.tokens_w
    }

    pub fn num_layers(&self) -> usize {
        self.keys.len()
    }

    pub fn dim(&self) -> usize {
        self.keys.first().map_or(0, |k| k.ncols())
    }

    /// Token index covering pixel `(row, col)`.
    pub fn token_of(&self, row: usize, col: usize) -> usize {
        let tr = (row / self.patch_size).min(self.tokens_h - 1);
        let tc = (col / self.patch_size).min(self.tokens_w - 1);
        tr * self.tokens_w + tc
    }
}

/// Seeded query and key projections, one pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    pub query: Vec<DMatrix<f64>>,
    pub key: Vec<DMatrix<f64>>,
}

impl Projections {
    /// `W_q` has i.i.d. `N(0, 1/d)` entries; `W_k = 0.8·W_q + 0.6·N` with an
    /// independent draw `N`, so query-key logits of similar tokens are positive
    /// on average.
    pub fn new(config: &CueConfig) -> Self {
        let normal = Normal::new(0.0, (1.0 / config.dim as f64).sqrt()).expect("positive std");
        let mut query = Vec::with_capacity(config.num_layers);
        let mut key = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let mut rq = substream(config.projection_seed, TAG_PROJECTION, 2 * l as u64);
            let mut rk = substream(config.projection_seed, TAG_PROJECTION, 2 * l as u64 + 1);
            let wq = DMatrix::from_fn(FEATURE_DIM, config.dim, |_, _| normal.sample(&mut rq));
            let noise = DMatrix::from_fn(FEATURE_DIM, config.dim, |_, _| normal.sample(&mut rk));
            key.push(&wq * 0.8 + noise * 0.6);
            query.push(wq);
        }
        Self { query, key }
    }
}

/// Projects patch features to per-layer queries and keys. Linear in the
/// features; undefined patches have zero features and therefore zero tokens.
pub fn encode_tokens(features: &PatchFeatures, config: &CueConfig) -> Result<TokenGrid, CueError> {
    encode_tokens_with(features, &Projections::new(config), config)
}

/// [`encode_tokens`] with precomputed projections.
pub fn encode_tokens_with(
    features: &PatchFeatures,
    proj: &Projections,
    config: &CueConfig,
) -> Result<TokenGrid, CueError> {
    config.validate()?;
    if !features.defined.iter().any(|d| *d) {
        return Err(CueError::EmptyFrame(features.frame_id));
    }
    let n = features.num_tokens();
    let f = DMatrix::from_fn(n, FEATURE_DIM, |i, j| features.values[i][j]);
    Ok(TokenGrid {
        frame_id: features.frame_id,
        tokens_h: features.tokens_h,
        tokens_w: features.tokens_w,
        patch_size: features.patch_size,
        image_height: features.image_height,
        image_width: features.image_width,
        queries: proj.query.iter().map(|w| &f * w).collect(),
        keys: proj.key.iter().map(|w| &f * w).collect(),
    })
}
