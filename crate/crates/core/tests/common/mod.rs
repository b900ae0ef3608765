use dyn4d::cues::DEGENERATE_OFFSET;

/// Exhaustive scan of the between-class variance `w0·w1·(μ0 − μ1)²` over
/// every interior edge `k / bins`, with bin centres as representatives.
pub fn otsu_oracle(values: &[f64], bins: usize) -> f64 {
    if values.is_empty() {
        return 1.0 + DEGENERATE_OFFSET;
    }
    let edge = |k: usize| k as f64 / bins as f64;
    let mut hist = vec![0usize; bins];
    for &v in values {
        let b = (0..bins).rev().find(|&b| v.clamp(0.0, 1.0) >= edge(b)).unwrap();
        hist[b] += 1;
    }
    let centre = |b: usize| (b as f64 + 0.5) / bins as f64;
    let n = values.len() as f64;
    let mut best = (0.0, 0);
    for k in 1..bins {
        let (c0, c1): (usize, usize) = (hist[..k].iter().sum(), hist[k..].iter().sum());
        if c0 == 0 || c1 == 0 {
            continue;
        }
        let m0 = (0..k).map(|b| hist[b] as f64 * centre(b)).sum::<f64>() / c0 as f64;
        let m1 = (k..bins).map(|b| hist[b] as f64 * centre(b)).sum::<f64>() / c1 as f64;
        let var = (c0 as f64 / n) * (c1 as f64 / n) * (m0 - m1).powi(2);
        if var > best.0 {
            best = (var, k);
        }
    }
    if best.0 > 0.0 {
        edge(best.1)
    } else {
        values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + DEGENERATE_OFFSET
    }
}
