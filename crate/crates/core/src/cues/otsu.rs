use crate::densemap::{DenseMap, MapRole};

/// Added to the maximum when the histogram has a single occupied bin, so that
/// every value falls below the threshold.
pub const DEGENERATE_OFFSET: f64 = 1.0 / (1u64 << 20) as f64;

fn edge(k: usize, bins: usize) -> f64 {
    k as f64 / bins as f64
}

/// Bin `b` holds the values with `edge(b) <= v < edge(b + 1)`, so a value is
/// below the candidate threshold `edge(k)` exactly when its bin is below `k`.
fn bin_of(v: f64, bins: usize) -> usize {
    let v = v.clamp(0.0, 1.0);
    let mut b = ((v * bins as f64).floor() as usize).min(bins - 1);
    while b > 0 && v < edge(b, bins) {
        b -= 1;
    }
    while b + 1 < bins && v >= edge(b + 1, bins) {
        b += 1;
    }
    b
}

/// Otsu threshold of values in `[0, 1]` over a `bins`-bin histogram.
///
/// Candidates are the interior bin edges `k / bins`; each bin is represented by
/// its centre. The between-class variance is evaluated from exact integer
/// class sums, and ties go to the smaller threshold. A single occupied bin
/// yields `max + 2⁻²⁰`; empty input yields `1 + 2⁻²⁰`.
pub fn otsu_threshold(values: &[f64], bins: usize) -> f64 {
    assert!(bins >= 2, "otsu_threshold needs at least 2 bins");
    if values.is_empty() {
        return 1.0 + DEGENERATE_OFFSET;
    }
    let mut hist = vec![0u64; bins];
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        hist[bin_of(v, bins)] += 1;
        max = max.max(v);
    }
    // bin centres in units of 1/(2·bins)
    let n: i128 = values.len() as i128;
    let total: i128 = hist
        .iter()
        .enumerate()
        .map(|(b, c)| *c as i128 * (2 * b as i128 + 1))
        .sum();
    let (mut c0, mut s0) = (0i128, 0i128);
    let mut best = (0.0f64, 0usize);
    for k in 1..bins {
        c0 += hist[k - 1] as i128;
        s0 += hist[k - 1] as i128 * (2 * k as i128 - 1);
        let c1 = n - c0;
        if c0 == 0 || c1 == 0 {
            continue;
        }
        let diff = (c1 * s0 - c0 * (total - s0)) as f64;
        let var = diff * diff / (c0 as f64 * c1 as f64);
        if var > best.0 {
            best = (var, k);
        }
    }
    if best.0 <= 0.0 {
        max + DEGENERATE_OFFSET
    } else {
        edge(best.1, bins)
    }
}

/// Dynamic (1) iff the value is at least `tau`; undefined pixels stay undefined.
pub fn binarize(map: &DenseMap, tau: f64) -> DenseMap {
    let data = map
        .data()
        .iter()
        .map(|v| {
            if !map.role().is_defined(*v) {
                MapRole::Mask.sentinel()
            } else if *v >= tau {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    DenseMap::from_vec(map.height(), map.width(), MapRole::Mask, data).expect("same shape")
}
