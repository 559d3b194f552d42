//! Time grids on [0,1] and the two scalar parameters that every other
//! module validates against: the Hurst index and the fractional order.

use crate::error::{FbmLabError, Result};

/// Hurst parameter H of a fractional Brownian motion, constrained to (0,1).
///
/// Generation works for the whole range; the pathwise constructions
/// additionally require H > 1/2 and check that at their own entry points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) || !h.is_finite() {
            return Err(FbmLabError::argument(format!(
                "hurst parameter must lie in (0,1), got {h}"
            )));
        }
        Ok(HurstParam(h))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Constructions built on long-memory increments reject H <= 1/2.
    pub fn require_long_memory(self) -> Result<Self> {
        if self.0 <= 0.5 {
            return Err(FbmLabError::configuration(format!(
                "construction requires hurst > 1/2, got {}",
                self.0
            )));
        }
        Ok(self)
    }
}

/// Fractional order alpha used by the one-sided derivatives.
///
/// Intrinsically alpha lies in (0,1); call sites working against a path with
/// Hurst index H must additionally keep alpha inside (1-H, 1/2), which
/// [`AlphaParam::check_against`] enforces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaParam(f64);

impl AlphaParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) || !alpha.is_finite() {
            return Err(FbmLabError::argument(format!(
                "alpha must lie in (0,1), got {alpha}"
            )));
        }
        Ok(AlphaParam(alpha))
    }

    /// Default order for a given Hurst index: interior of the admissible
    /// interval (1-H, 1/2), biased away from the 1-H boundary where the
    /// derivative of the integrator blows up.
    pub fn default_for(h: HurstParam) -> Result<Self> {
        let lo = 1.0 - h.value();
        let hi = 0.5f64.min(1.0);
        if lo >= hi {
            return Err(FbmLabError::configuration(format!(
                "no admissible alpha for hurst {}",
                h.value()
            )));
        }
        AlphaParam::new(lo + 0.6 * (hi - lo))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Enforce 1-H < alpha < 1/2 for use against a path with Hurst index `h`.
    pub fn check_against(self, h: HurstParam) -> Result<Self> {
        if self.0 <= 1.0 - h.value() || self.0 >= 0.5 {
            return Err(FbmLabError::configuration(format!(
                "alpha outside (1-H, 1/2): alpha = {}, H = {}",
                self.0,
                h.value()
            )));
        }
        Ok(self)
    }
}

/// A strictly increasing grid of time points in [0,1], starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(FbmLabError::argument("time grid must be nonempty"));
        }
        if points[0] != 0.0 {
            return Err(FbmLabError::argument(format!(
                "time grid must start at 0, got {}",
                points[0]
            )));
        }
        let last = *points.last().unwrap();
        if last > 1.0 {
            return Err(FbmLabError::argument(format!(
                "time grid must end at or before 1, got {last}"
            )));
        }
        for w in points.windows(2) {
            if !(w[1] > w[0]) {
                return Err(FbmLabError::argument(format!(
                    "time grid must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(TimeGrid { points })
    }

    /// Uniform grid with `n` intervals on [0,1] (n+1 points).
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(FbmLabError::argument("uniform grid needs n >= 1"));
        }
        let pts = (0..=n).map(|i| i as f64 / n as f64).collect();
        TimeGrid::new(pts)
    }

    /// Sorted union of this grid with extra points; duplicates (within
    /// `1e-15` absolute) are dropped in favor of the existing points.
    pub fn merged_with(&self, extra: &[f64]) -> Result<Self> {
        let mut all = self.points.clone();
        all.extend_from_slice(extra);
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        TimeGrid::new(all)
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// Index of the first grid point >= `t`, if any.
    pub fn first_index_at_or_after(&self, t: f64) -> Option<usize> {
        self.points.iter().position(|&x| x >= t - 1e-15)
    }

    /// Index of the last grid point <= `t`, if any.
    pub fn last_index_at_or_before(&self, t: f64) -> Option<usize> {
        self.points.iter().rposition(|&x| x <= t + 1e-15)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurst_rejects_out_of_range() {
        assert!(HurstParam::new(0.0).is_err());
        assert!(HurstParam::new(1.0).is_err());
        assert!(HurstParam::new(f64::NAN).is_err());
        assert!(HurstParam::new(0.7).is_ok());
        assert!(HurstParam::new(0.4).unwrap().require_long_memory().is_err());
    }

    #[test]
    fn alpha_window_checks() {
        let h = HurstParam::new(0.7).unwrap();
        // admissible window is (0.3, 0.5)
        assert!(AlphaParam::new(0.35).unwrap().check_against(h).is_ok());
        assert!(AlphaParam::new(0.25).unwrap().check_against(h).is_err());
        assert!(AlphaParam::new(0.5).is_ok());
        assert!(AlphaParam::new(0.5).unwrap().check_against(h).is_err());
        let d = AlphaParam::default_for(h).unwrap().value();
        assert!((d - 0.42).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.2]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.2, 0.2]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 1.2]).is_err());
        let g = TimeGrid::uniform(4).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.t(2), 0.5);
    }

    #[test]
    fn merge_dedups() {
        let g = TimeGrid::uniform(2).unwrap();
        let m = g.merged_with(&[0.25, 0.5, 0.75]).unwrap();
        assert_eq!(m.len(), 5);
        assert_eq!(m.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
