//! Reconstruction metrics.
//!
//! Chamfer distance is `1000 · (mean_a min_b ‖a-b‖² + mean_b min_a ‖a-b‖²)`;
//! F-score counts a point as a hit when its nearest neighbour in the other
//! cloud is within Euclidean distance `tau` (inclusive). Both expect clouds
//! in the unit-normalized frame.

use nalgebra::Vector3;

use crate::geometry::PointCloud;
use crate::{Error, Result};

pub const CHAMFER_SCALE: f64 = 1000.0;
pub const DEFAULT_TAU: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub cd: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
}

fn sq_dist(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

/// Uniform voxel grid over a target cloud for exact nearest-neighbour
/// queries.
pub struct NearestGrid<'a> {
    points: &'a [Vector3<f64>],
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> NearestGrid<'a> {
    pub fn new(points: &'a [Vector3<f64>]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = hi - lo;
        // About two points per cell on a surface-like set.
        let span = extent.max().max(1e-12);
        let per_axis = ((points.len() as f64 / 2.0).sqrt().ceil() as usize).clamp(1, 128);
        let cell = span / per_axis as f64;
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell).floor() as usize + 1).min(per_axis + 1));
        let n_cells = dims[0] * dims[1] * dims[2];

        let mut grid = Self {
            points,
            origin: lo,
            cell,
            dims,
            starts: vec![0; n_cells + 1],
            order: Vec::new(),
        };
        let ids: Vec<usize> = points.iter().map(|p| grid.cell_id(grid.cell_of(p))).collect();
        for &c in &ids {
            grid.starts[c + 1] += 1;
        }
        for c in 0..n_cells {
            grid.starts[c + 1] += grid.starts[c];
        }
        let mut fill = grid.starts.clone();
        grid.order = vec![0; points.len()];
        for (i, &c) in ids.iter().enumerate() {
            grid.order[fill[c]] = i;
            fill[c] += 1;
        }
        grid
    }

    fn cell_of(&self, p: &Vector3<f64>) -> [isize; 3] {
        [0, 1, 2].map(|k| {
            let c = ((p[k] - self.origin[k]) / self.cell).floor();
            (c.max(0.0) as isize).min(self.dims[k] as isize - 1)
        })
    }

    fn cell_id(&self, c: [isize; 3]) -> usize {
        (c[0] as usize * self.dims[1] + c[1] as usize) * self.dims[2] + c[2] as usize
    }

    /// Smallest squared distance from `q` to the grid's points.
    pub fn nearest_sq(&self, q: &Vector3<f64>) -> f64 {
        let center = self.cell_of(q);
        let max_ring = *self.dims.iter().max().unwrap() as isize;
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            // Unscanned points sit in rings >= `ring`, at least
            // `(ring - 1) · cell` from `q`.
            let bound = (ring - 1).max(0) as f64 * self.cell;
            if best <= bound * bound {
                break;
            }
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let c = [center[0] + dx, center[1] + dy, center[2] + dz];
                        if (0..3).any(|k| c[k] < 0 || c[k] >= self.dims[k] as isize) {
                            continue;
                        }
                        let id = self.cell_id(c);
                        for &i in &self.order[self.starts[id]..self.starts[id + 1]] {
                            best = best.min(sq_dist(q, &self.points[i]));
                        }
                    }
                }
            }
        }
        best
    }
}

/// Per-point squared distance from each point of `from` to its nearest
/// neighbour in `to`.
pub fn nearest_sq_distances(from: &PointCloud, to: &PointCloud) -> Vec<f64> {
    let grid = NearestGrid::new(to.positions());
    from.positions().iter().map(|p| grid.nearest_sq(p)).collect()
}

fn check_nonempty(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("metric on an empty cloud"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_nonempty(a, b)?;
    let ab = nearest_sq_distances(a, b);
    let ba = nearest_sq_distances(b, a);
    Ok(CHAMFER_SCALE * (mean(&ab) + mean(&ba)))
}

fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// F-score of prediction `a` against reference `b`; the report also carries
/// the Chamfer distance of the pair.
pub fn fscore(a: &PointCloud, b: &PointCloud, tau: f64) -> Result<MetricReport> {
    check_nonempty(a, b)?;
    if !(tau > 0.0) {
        return Err(Error::invalid("F-score threshold must be positive"));
    }
    let ab = nearest_sq_distances(a, b);
    let ba = nearest_sq_distances(b, a);
    let t2 = tau * tau;
    let hits = |d: &[f64]| d.iter().filter(|&&x| x <= t2).count() as f64 / d.len() as f64;
    let (precision, recall) = (hits(&ab), hits(&ba));
    Ok(MetricReport {
        cd: CHAMFER_SCALE * (mean(&ab) + mean(&ba)),
        f1: f1_of(precision, recall),
        precision,
        recall,
        threshold: tau,
    })
}

/// Mean and population standard deviation of the Chamfer distance between
/// `reference` and samples drawn under seeds `0..seeds`.
pub fn seed_consistency(
    sampler: &mut dyn FnMut(u64) -> Result<PointCloud>,
    seeds: usize,
    reference: &PointCloud,
) -> Result<(f64, f64)> {
    if seeds < 2 {
        return Err(Error::invalid("seed consistency needs at least two seeds"));
    }
    let cds = (0..seeds as u64)
        .map(|s| chamfer(&sampler(s)?, reference))
        .collect::<Result<Vec<_>>>()?;
    let m = mean(&cds);
    let var = cds.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / cds.len() as f64;
    Ok((m, var.sqrt()))
}
