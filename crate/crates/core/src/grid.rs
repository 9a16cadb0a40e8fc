//! Uniform spatial grid for sup-norm range queries.
//!
//! Used to prune pairwise sums in the RGG generator and the spatial HAC
//! estimators: candidates within sup-norm radius `r` of a point are found by
//! scanning the surrounding cell block. Queries return indices in ascending
//! order so downstream accumulation is deterministic.

use nalgebra::DMatrix;

pub struct SpatialGrid {
    cell: f64,
    d: usize,
    mins: Vec<f64>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    /// point ids bucketed by cell, each bucket ascending
    buckets: Vec<Vec<u32>>,
}

impl SpatialGrid {
    pub fn build(positions: &DMatrix<f64>, cell: f64) -> Self {
        let n = positions.nrows();
        let d = positions.ncols();
        let mut cell = if cell > 0.0 { cell } else { 1.0 };
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for i in 0..n {
            for k in 0..d {
                let x = positions[(i, k)];
                mins[k] = mins[k].min(x);
                maxs[k] = maxs[k].max(x);
            }
        }
        if n == 0 {
            mins.iter_mut().for_each(|m| *m = 0.0);
            maxs.iter_mut().for_each(|m| *m = 0.0);
        }
        // cap cells per dimension so total bucket count stays O(n); coarser
        // cells only add candidates, never drop them
        let max_per_dim = ((2.0 * (n.max(1) as f64).powf(1.0 / d as f64)).ceil() as usize).max(1);
        for k in 0..d {
            let extent = maxs[k] - mins[k];
            if extent > 0.0 {
                cell = cell.max(extent / max_per_dim as f64);
            }
        }
        let mut dims = vec![0usize; d];
        for k in 0..d {
            dims[k] = ((((maxs[k] - mins[k]) / cell).floor() as usize) + 1).min(max_per_dim);
        }
        let mut strides = vec![0usize; d];
        let mut acc = 1usize;
        for k in 0..d {
            strides[k] = acc;
            acc *= dims[k];
        }
        let mut buckets = vec![Vec::new(); acc.max(1)];
        for i in 0..n {
            let mut idx = 0usize;
            for k in 0..d {
                let c = (((positions[(i, k)] - mins[k]) / cell).floor() as usize).min(dims[k] - 1);
                idx += c * strides[k];
            }
            buckets[idx].push(i as u32);
        }
        Self {
            cell,
            d,
            mins,
            dims,
            strides,
            buckets,
        }
    }

    /// Collect into `out` all point ids whose cell lies within `radius` (sup
    /// norm) of `point`'s cell block, ascending. Every point within sup-norm
    /// distance `radius` of `point` is included; some farther ones may be too.
    pub fn candidates_within(&self, positions: &DMatrix<f64>, point: usize, radius: f64, out: &mut Vec<u32>) {
        out.clear();
        let reach = (radius / self.cell).ceil() as isize;
        let mut lo = vec![0isize; self.d];
        let mut hi = vec![0isize; self.d];
        for k in 0..self.d {
            let c = (((positions[(point, k)] - self.mins[k]) / self.cell).floor() as isize)
                .min(self.dims[k] as isize - 1)
                .max(0);
            lo[k] = (c - reach).max(0);
            hi[k] = (c + reach).min(self.dims[k] as isize - 1);
        }
        let mut cursor = lo.clone();
        'outer: loop {
            let mut idx = 0usize;
            for (c, stride) in cursor.iter().zip(&self.strides) {
                idx += *c as usize * stride;
            }
            out.extend_from_slice(&self.buckets[idx]);
            for k in 0..self.d {
                cursor[k] += 1;
                if cursor[k] <= hi[k] {
                    continue 'outer;
                }
                cursor[k] = lo[k];
                if k == self.d - 1 {
                    break 'outer;
                }
            }
            if self.d == 0 {
                break;
            }
        }
        out.sort_unstable();
    }
}
