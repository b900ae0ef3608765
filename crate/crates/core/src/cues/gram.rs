use nalgebra::DMatrix;

use crate::densemap::{DenseMap, MapRole};

use super::{CueConfig, CueError, TokenGrid};

fn unit_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| {
            let row: Vec<f64> = (0..a.ncols()).map(|k| a[(i, k)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-wise cosine similarity between the tokens of two frames. Zero rows
/// have zero similarity with everything.
pub fn gram_similarity(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, CueError> {
    if a.ncols() != b.ncols() {
        return Err(CueError::DimensionMismatch(format!(
            "token widths {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (ua, ub) = (unit_rows(a), unit_rows(b));
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        dot(&ua[i], &ub[j]).clamp(-1.0, 1.0)
    }))
}

/// Per-frame dynamic saliency at token and pixel resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub frame_id: usize,
    pub tokens: DenseMap,
    pub upsampled: DenseMap,
}

fn best_match_deficit(gram: &DMatrix<f64>, row: usize) -> f64 {
    let best = (0..gram.ncols())
        .map(|j| gram[(row, j)])
        .fold(f64::NEG_INFINITY, f64::max);
    1.0 - best
}

fn is_zero_row(m: &DMatrix<f64>, i: usize) -> bool {
    (0..m.ncols()).all(|k| m[(i, k)] == 0.0)
}

/// Saliency of frame `r`: mean over the selected layers and temporal neighbours
/// of `1 − max_j G^KK[i, j]`, clamped to `[0, 1]`. Tokens with a zero key carry
/// no evidence and contribute 0. With `use_query_gram` the query term is
/// averaged in with equal weight.
pub fn aggregate_saliency(grids: &[TokenGrid], r: usize, config: &CueConfig) -> Result<SaliencyMap, CueError> {
    let grid = grids
        .get(r)
        .ok_or_else(|| CueError::DimensionMismatch(format!("frame {r} out of range")))?;
    let lo = r.saturating_sub(config.neighbor_radius);
    let hi = (r + config.neighbor_radius).min(grids.len() - 1);
    let neighbors: Vec<usize> = (lo..=hi).filter(|s| *s != r).collect();
    if neighbors.is_empty() {
        return Err(CueError::NoNeighbors(grid.frame_id));
    }
    let n = grid.num_tokens();
    let mut acc = vec![0.0; n];
    let mut terms = 0usize;
    for &l in &config.layer_set {
        if l >= grid.num_layers() {
            return Err(CueError::DimensionMismatch(format!("layer {l} not in grid")));
        }
        for &s in &neighbors {
            let other = &grids[s];
            if other.num_tokens() != n {
                return Err(CueError::DimensionMismatch(format!(
                    "frames {} and {} have different token counts",
                    grid.frame_id, other.frame_id
                )));
            }
            let mut sources = vec![(&grid.keys[l], &other.keys[l])];
            if config.use_query_gram {
                sources.push((&grid.queries[l], &other.queries[l]));
            }
            let weight = 1.0 / sources.len() as f64;
            for (a, b) in sources {
                let g = gram_similarity(a, b)?;
                for (i, v) in acc.iter_mut().enumerate() {
                    if !is_zero_row(a, i) {
                        *v += weight * best_match_deficit(&g, i);
                    }
                }
            }
            terms += 1;
        }
    }
    let values: Vec<f64> = acc.iter().map(|v| (v / terms as f64).clamp(0.0, 1.0)).collect();
    let tokens =
        DenseMap::from_vec(grid.tokens_h, grid.tokens_w, MapRole::Saliency, values).expect("token count matches grid");
    let upsampled = DenseMap::from_fn(grid.image_height, grid.image_width, MapRole::Saliency, |row, col| {
        tokens.data()[grid.token_of(row, col)]
    });
    Ok(SaliencyMap {
        frame_id: grid.frame_id,
        tokens,
        upsampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(frame_id: usize, keys: DMatrix<f64>) -> TokenGrid {
        TokenGrid {
            frame_id,
            tokens_h: 1,
            tokens_w: keys.nrows(),
            patch_size: 1,
            image_height: 1,
            image_width: keys.nrows(),
            queries: vec![keys.clone()],
            keys: vec![keys],
        }
    }

    #[test]
    fn self_similarity_and_orthogonality() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.5]);
        let g = gram_similarity(&a, &a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn zero_rows_and_width_mismatch() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let g = gram_similarity(&a, &a).unwrap();
        assert_eq!(g[(0, 0)], 0.0);
        assert_eq!(g[(0, 1)], 0.0);
        assert!(gram_similarity(&a, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn two_token_hand_case() {
        let c = CueConfig {
            layer_set: vec![0],
            neighbor_radius: 1,
            ..CueConfig::default()
        };
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, (1.0f64 - 0.09).sqrt()]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let sal = aggregate_saliency(&[grid(0, r), grid(1, s)], 0, &c).unwrap();
        assert!(sal.tokens.data()[0].abs() < 1e-12);
        assert!((sal.tokens.data()[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn isolated_frame_has_no_neighbors() {
        let c = CueConfig {
            layer_set: vec![0],
            ..CueConfig::default()
        };
        let g = grid(4, DMatrix::identity(2, 2));
        assert_eq!(aggregate_saliency(&[g], 0, &c), Err(CueError::NoNeighbors(4)));
    }
}
