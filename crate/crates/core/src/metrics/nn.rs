//! Exact nearest-neighbour distances via a uniform grid.

use rayon::prelude::*;

use crate::geometry::Vec3;

/// Below this many reference points a brute-force scan is used.
pub const BRUTE_FORCE_BELOW: usize = 1000;

#[inline]
pub fn squared_distance(a: &Vec3, b: &Vec3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

pub fn brute_force_nearest(query: &Vec3, points: &[Vec3]) -> f64 {
    points
        .iter()
        .map(|p| squared_distance(query, p))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Uniform grid over a reference cloud with points bucketed by cell.
pub struct GridIndex<'a> {
    points: &'a [Vec3],
    origin: Vec3,
    cell: f64,
    dims: [i64; 3],
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> GridIndex<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        assert!(!points.is_empty(), "grid index needs points");
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = hi - lo;
        let span = extent.max().max(1e-12);
        // about two points per occupied cell on a surface-like cloud
        let mut cell = span / (points.len() as f64 / 2.0).sqrt().max(1.0);
        // keep the cell count bounded for thin or degenerate clouds
        let count = |c: f64| (0..3).map(|a| (extent[a] / c).floor() as i64 + 1).product::<i64>();
        while count(cell) > 8 * points.len() as i64 + 64 {
            cell *= 2.0;
        }
        let dims = [0, 1, 2].map(|a| (extent[a] / cell).floor() as i64 + 1);
        let ncells = (dims[0] * dims[1] * dims[2]) as usize;
        let mut counts = vec![0usize; ncells + 1];
        let cell_ids: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = [0, 1, 2].map(|a| (((p[a] - lo[a]) / cell).floor() as i64).clamp(0, dims[a] - 1));
                ((c[2] * dims[1] + c[1]) * dims[0] + c[0]) as usize
            })
            .collect();
        for id in &cell_ids {
            counts[id + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut order = vec![0usize; points.len()];
        for (i, id) in cell_ids.iter().enumerate() {
            order[fill[*id]] = i;
            fill[*id] += 1;
        }
        Self {
            points,
            origin: lo,
            cell,
            dims,
            starts,
            order,
        }
    }

    fn scan_cell(&self, c: [i64; 3], query: &Vec3, best: &mut f64) {
        if (0..3).any(|a| c[a] < 0 || c[a] >= self.dims[a]) {
            return;
        }
        let id = ((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize;
        for &i in &self.order[self.starts[id]..self.starts[id + 1]] {
            let d = squared_distance(query, &self.points[i]);
            if d < *best {
                *best = d;
            }
        }
    }

    /// Exact distance from `query` to its nearest reference point.
    ///
    /// Visits shells of cells at growing Chebyshev radius around the query's
    /// (unclamped) cell, clipped to the grid, and stops once every unvisited
    /// cell is provably farther than the best candidate.
    pub fn nearest(&self, query: &Vec3) -> f64 {
        let q = [0, 1, 2].map(|a| ((query[a] - self.origin[a]) / self.cell).floor() as i64);
        // first shell that touches the grid, and the one that covers all of it
        let gap = |a: usize| (-q[a]).max(q[a] - (self.dims[a] - 1)).max(0);
        let reach = |a: usize| q[a].abs().max((self.dims[a] - 1 - q[a]).abs());
        let first = (0..3).map(gap).max().unwrap_or(0);
        let last = (0..3).map(reach).max().unwrap_or(0);
        let mut best = f64::INFINITY;
        for r in first..=last {
            let lo = |a: usize| (q[a] - r).max(0);
            let hi = |a: usize| (q[a] + r).min(self.dims[a] - 1);
            for z in lo(2)..=hi(2) {
                for y in lo(1)..=hi(1) {
                    if (z - q[2]).abs() == r || (y - q[1]).abs() == r {
                        for x in lo(0)..=hi(0) {
                            self.scan_cell([x, y, z], query, &mut best);
                        }
                    } else {
                        for x in [q[0] - r, q[0] + r] {
                            if x >= 0 && x < self.dims[0] && (r > 0 || x == q[0] - r) {
                                self.scan_cell([x, y, z], query, &mut best);
                            }
                        }
                    }
                }
            }
            // anything not yet scanned is at least r whole cells away; the
            // shrink factor absorbs rounding in the cell assignment
            let bound = r as f64 * self.cell * (1.0 - 1e-9);
            if best <= bound * bound {
                break;
            }
        }
        best.sqrt()
    }
}

/// Distance from every query point to its nearest reference point.
pub fn nearest_distances(queries: &[Vec3], reference: &[Vec3]) -> Vec<f64> {
    if reference.len() < BRUTE_FORCE_BELOW {
        return queries.par_iter().map(|q| brute_force_nearest(q, reference)).collect();
    }
    let index = GridIndex::new(reference);
    queries.par_iter().map(|q| index.nearest(q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn grid_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let reference: Vec<Vec3> = (0..3000)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(4.0..4.3),
                )
            })
            .collect();
        let queries: Vec<Vec3> = (0..500)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(2.0..7.0),
                )
            })
            .collect();
        let index = GridIndex::new(&reference);
        for q in &queries {
            assert_eq!(index.nearest(q), brute_force_nearest(q, &reference));
        }
    }

    #[test]
    fn single_point_and_coincident_points() {
        let pts = vec![Vec3::new(1.0, 1.0, 1.0); 5];
        let index = GridIndex::new(&pts);
        assert_eq!(index.nearest(&Vec3::new(1.0, 1.0, 2.0)), 1.0);
        assert_eq!(index.nearest(&Vec3::new(1.0, 1.0, 1.0)), 0.0);
    }
}
