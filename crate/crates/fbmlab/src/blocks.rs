//! The zeta-weighted block partition: t_n = start + L * sum_{k<=n} k^{-gamma}
//! / zeta(gamma), accumulating at the right endpoint as n grows.
//!
//! Blocks shrink polynomially, so a fixed base grid eventually under-resolves
//! them. Two guards keep the stopping logic meaningful: a truncation rule on
//! n_max, and per-block sub-grids of at least `points_per_block` points.

use crate::error::{FbmLabError, Result};
use crate::grid::TimeGrid;
use crate::stats::zeta;

/// Smallest block length the floating-point covariance can resolve; below
/// this the fBm covariance matrix loses the gap information to cancellation.
pub const BLOCK_TIME_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BlockPartition {
    gamma: f64,
    zeta_gamma: f64,
    /// block lengths Delta_n, n = 1..=n_max (already rebased)
    delta: Vec<f64>,
    /// boundaries t_0 = start, ..., t_{n_max}
    t: Vec<f64>,
    n_max: usize,
    points_per_block: usize,
    start: f64,
    length: f64,
}

impl BlockPartition {
    /// Partition of [0, 1].
    pub fn new(gamma: f64, n_max: usize, points_per_block: usize) -> Result<Self> {
        Self::rebased(gamma, n_max, points_per_block, 0.0, 1.0)
    }

    /// Partition rebased onto [start, end] by the affine time map.
    pub fn rebased(
        gamma: f64,
        n_max: usize,
        points_per_block: usize,
        start: f64,
        end: f64,
    ) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(FbmLabError::configuration(format!(
                "gamma outside (1, inf): gamma = {gamma}"
            )));
        }
        if n_max == 0 {
            return Err(FbmLabError::configuration("n_max must be at least 1"));
        }
        if points_per_block < 4 {
            return Err(FbmLabError::configuration("points_per_block must be at least 4"));
        }
        if !(start >= 0.0 && end <= 1.0 && start < end) {
            return Err(FbmLabError::configuration(format!(
                "invalid partition interval [{start}, {end}]"
            )));
        }
        let length = end - start;
        let z = zeta(gamma);
        let mut delta = Vec::with_capacity(n_max);
        let mut t = Vec::with_capacity(n_max + 1);
        t.push(start);
        let mut acc = start;
        for n in 1..=n_max {
            let d = length * (n as f64).powf(-gamma) / z;
            if d < BLOCK_TIME_FLOOR {
                break;
            }
            acc += d;
            delta.push(d);
            t.push(acc);
        }
        if delta.is_empty() {
            return Err(FbmLabError::configuration(
                "no block satisfies the time-resolution floor",
            ));
        }
        debug_assert!(*t.last().unwrap() < end + 1e-12);
        Ok(BlockPartition {
            gamma,
            zeta_gamma: z,
            n_max: delta.len(),
            delta,
            t,
            points_per_block,
            start,
            length,
        })
    }

    /// Truncation rule for a base grid of step `base_step`: the largest n
    /// with Delta_n >= 4 * base_step. With per-block sub-grids the trigger
    /// resolution is kept by the sub-grid instead, and only the
    /// floating-point floor binds.
    pub fn max_blocks_for_step(gamma: f64, length: f64, base_step: f64) -> usize {
        let z = zeta(gamma);
        let mut n = 0usize;
        loop {
            let d = length * ((n + 1) as f64).powf(-gamma) / z;
            if d < 4.0 * base_step || n >= 100_000 {
                return n.max(1);
            }
            n += 1;
        }
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn zeta_gamma(&self) -> f64 {
        self.zeta_gamma
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    #[inline]
    pub fn points_per_block(&self) -> usize {
        self.points_per_block
    }

    #[inline]
    pub fn start(&self) -> f64 {
        self.start
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Block length Delta_n (1-based block index).
    #[inline]
    pub fn delta(&self, n: usize) -> f64 {
        self.delta[n - 1]
    }

    /// Boundary t_n, n = 0..=n_max.
    #[inline]
    pub fn boundary(&self, n: usize) -> f64 {
        self.t[n]
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.t
    }

    /// Equispaced fill points guaranteeing every block carries at least
    /// `points_per_block` grid points, block boundaries included.
    pub fn subgrid_points(&self) -> Vec<f64> {
        let m = self.points_per_block;
        let mut pts = Vec::with_capacity(self.n_max * m);
        for n in 1..=self.n_max {
            let lo = self.t[n - 1];
            let hi = self.t[n];
            for k in 0..m {
                pts.push(lo + (hi - lo) * (k as f64) / ((m - 1) as f64));
            }
        }
        pts
    }

    /// Like [`Self::subgrid_points`], but blocks that a uniform base grid of
    /// step `base_step` already resolves with `points_per_block` points only
    /// contribute their boundaries.
    pub fn subgrid_points_for_step(&self, base_step: f64) -> Vec<f64> {
        let m = self.points_per_block;
        let mut pts = Vec::with_capacity(self.n_max * m);
        pts.push(self.t[0]);
        for n in 1..=self.n_max {
            let lo = self.t[n - 1];
            let hi = self.t[n];
            if (hi - lo) / base_step >= (m - 1) as f64 {
                pts.push(hi);
            } else {
                for k in 1..m {
                    pts.push(lo + (hi - lo) * (k as f64) / ((m - 1) as f64));
                }
            }
        }
        pts
    }

    /// Index ranges of each block inside `grid`: (index of t_{n-1}, index of
    /// t_n), inclusive. Every boundary must be a grid point.
    pub fn block_index_ranges(&self, grid: &TimeGrid) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::with_capacity(self.n_max);
        let mut idx = Vec::with_capacity(self.t.len());
        let pts = grid.points();
        let mut cursor = 0usize;
        for &b in &self.t {
            while cursor < pts.len() && pts[cursor] < b - 1e-12 {
                cursor += 1;
            }
            if cursor >= pts.len() || (pts[cursor] - b).abs() > 1e-12 {
                return Err(FbmLabError::argument(format!(
                    "block boundary {b} is not a grid point"
                )));
            }
            idx.push(cursor);
        }
        for n in 1..=self.n_max {
            out.push((idx[n - 1], idx[n]));
        }
        Ok(out)
    }
}
