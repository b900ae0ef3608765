use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::densemap::DenseMap;

use super::{CueConfig, CueError, TokenGrid};

/// Tokens whose saliency is at least `tau`.
pub fn dynamic_tokens(token_saliency: &DenseMap, tau: f64) -> Vec<bool> {
    token_saliency
        .data()
        .iter()
        .map(|v| token_saliency.role().is_defined(*v) && *v >= tau)
        .collect()
}

/// Zeroes the keys of tokens with `mask >= tau` in the first `l_mask` layers.
/// Queries and all other keys are left untouched.
pub fn suppress_keys(grid: &TokenGrid, mask: &DenseMap, tau: f64, l_mask: usize) -> Result<TokenGrid, CueError> {
    if mask.height() != grid.tokens_h || mask.width() != grid.tokens_w {
        return Err(CueError::ResolutionMismatch {
            got_h: mask.height(),
            got_w: mask.width(),
            want_h: grid.tokens_h,
            want_w: grid.tokens_w,
        });
    }
    let flags = dynamic_tokens(mask, tau);
    let mut out = grid.clone();
    for keys in out.keys.iter_mut().take(l_mask) {
        for (i, _) in flags.iter().enumerate().filter(|(_, f)| **f) {
            keys.row_mut(i).fill(0.0);
        }
    }
    Ok(out)
}

/// Attention mass one frame's queries place on another frame's dynamic tokens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMass {
    pub query_frame: usize,
    pub key_frame: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// Per frame, attended context averaged over layers and source frames.
    pub contexts: Vec<DMatrix<f64>>,
    /// One entry per ordered frame pair.
    pub pair_mass: Vec<PairMass>,
    pub mean_mass: f64,
}

fn softmax_row(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

fn is_zero_row(m: &DMatrix<f64>, i: usize) -> bool {
    m.row(i).iter().all(|v| *v == 0.0)
}

/// Cross-frame attention of frame `a` onto frame `b`: context rows per layer
/// (values are `b`'s queries, which suppression never touches) and the mean
/// mass on `b`'s dynamic tokens over nonzero queries and layers.
fn attend(a: &TokenGrid, b: &TokenGrid, dynamic_b: &[bool], temperature: f64) -> (DMatrix<f64>, f64) {
    let n_b = b.num_tokens();
    let mut context = DMatrix::zeros(a.num_tokens(), a.dim());
    let (mut mass, mut count) = (0.0, 0usize);
    let mut p = vec![0.0; n_b];
    for l in 0..a.num_layers() {
        let (q, k, v) = (&a.queries[l], &b.keys[l], &b.queries[l]);
        for i in 0..q.nrows() {
            for (j, pj) in p.iter_mut().enumerate() {
                *pj = q.row(i).dot(&k.row(j)) / temperature;
            }
            softmax_row(&mut p);
            let scale = 1.0 / a.num_layers() as f64;
            for (j, pj) in p.iter().enumerate() {
                for c in 0..v.ncols() {
                    context[(i, c)] += scale * pj * v[(j, c)];
                }
            }
            if !is_zero_row(q, i) {
                mass += p
                    .iter()
                    .zip(dynamic_b)
                    .filter(|(_, d)| **d)
                    .map(|(pj, _)| pj)
                    .sum::<f64>();
                count += 1;
            }
        }
    }
    (context, if count > 0 { mass / count as f64 } else { 0.0 })
}

/// Single-head cross-frame attention over every ordered frame pair.
/// `dynamic[f]` flags the dynamic tokens of frame `f` for the diagnostic.
pub fn attention_forward(
    grids: &[TokenGrid],
    dynamic: &[Vec<bool>],
    config: &CueConfig,
) -> Result<AttentionOutput, CueError> {
    if grids.len() < 2 {
        return Err(CueError::DimensionMismatch(
            "attention needs at least two frames".into(),
        ));
    }
    if dynamic.len() != grids.len() || grids.iter().zip(dynamic).any(|(g, d)| g.num_tokens() != d.len()) {
        return Err(CueError::DimensionMismatch(
            "dynamic flags do not match the grids".into(),
        ));
    }
    let (n0, d0, l0) = (grids[0].num_tokens(), grids[0].dim(), grids[0].num_layers());
    if grids
        .iter()
        .any(|g| g.num_tokens() != n0 || g.dim() != d0 || g.num_layers() != l0)
    {
        return Err(CueError::DimensionMismatch("grids differ in shape".into()));
    }
    let n = grids.len();
    let per_frame: Vec<(DMatrix<f64>, Vec<PairMass>)> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut ctx = DMatrix::zeros(n0, d0);
            let mut masses = Vec::with_capacity(n - 1);
            for b in (0..n).filter(|b| *b != a) {
                let (c, m) = attend(&grids[a], &grids[b], &dynamic[b], config.temperature);
                ctx += c / (n - 1) as f64;
                masses.push(PairMass {
                    query_frame: grids[a].frame_id,
                    key_frame: grids[b].frame_id,
                    mass: m,
                });
            }
            (ctx, masses)
        })
        .collect();
    let mut contexts = Vec::with_capacity(n);
    let mut pair_mass = Vec::with_capacity(n * (n - 1));
    for (c, m) in per_frame {
        contexts.push(c);
        pair_mass.extend(m);
    }
    let mean_mass = pair_mass.iter().map(|p| p.mass).sum::<f64>() / pair_mass.len() as f64;
    Ok(AttentionOutput {
        contexts,
        pair_mass,
        mean_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densemap::MapRole;

    fn grid(frame_id: usize, layers: usize) -> TokenGrid {
        let q = DMatrix::from_fn(4, 3, |i, j| ((i * 3 + j + frame_id) as f64 * 0.37).sin());
        let k = DMatrix::from_fn(4, 3, |i, j| ((i * 5 + j + 2 * frame_id) as f64 * 0.23).cos());
        TokenGrid {
            frame_id,
            tokens_h: 2,
            tokens_w: 2,
            patch_size: 1,
            image_height: 2,
            image_width: 2,
            queries: vec![q; layers],
            keys: vec![k; layers],
        }
    }

    #[test]
    fn suppression_boundaries() {
        let g = grid(0, 3);
        let mask = DenseMap::from_vec(2, 2, MapRole::Saliency, vec![0.1, 0.9, 0.5, 0.0]).unwrap();
        assert_eq!(suppress_keys(&g, &mask, 0.5, 0).unwrap(), g);
        let all = suppress_keys(&g, &mask, 0.0, 2).unwrap();
        assert!(all.keys[0].iter().chain(all.keys[1].iter()).all(|v| *v == 0.0));
        assert_eq!(all.keys[2], g.keys[2]);
        assert_eq!(all.queries, g.queries);
        let bad = DenseMap::filled(1, 4, MapRole::Saliency, 0.0);
        assert!(matches!(
            suppress_keys(&g, &bad, 0.5, 1),
            Err(CueError::ResolutionMismatch { .. })
        ));
    }

    #[test]
    fn empty_dynamic_set_has_zero_mass() {
        let out = attention_forward(
            &[grid(0, 2), grid(1, 2)],
            &[vec![false; 4], vec![false; 4]],
            &CueConfig::default(),
        )
        .unwrap();
        assert!(out.pair_mass.iter().all(|p| p.mass == 0.0));
        assert_eq!(out.pair_mass.len(), 2);
    }
}
