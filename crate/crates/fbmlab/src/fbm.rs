//! Exact-law fractional Brownian motion on arbitrary grids of [0,1].
//!
//! Arbitrary grids are sampled through a Cholesky factor of the grid
//! covariance; uniform grids take a circulant-embedding fast path through
//! the FFT (fractional Gaussian noise, then cumulative sum). Both draws are
//! exact in law and deterministic given (grid, hurst, seed).

use crate::error::{FbmLabError, Result};
use crate::fft::fft_inplace;
use crate::grid::{HurstParam, TimeGrid};
use crate::linalg::PackedCholesky;
use crate::rng::GaussianStream;

/// Covariance of fractional Brownian motion at times `s`, `t` in [0,1]:
/// (s^{2H} + t^{2H} - |s-t|^{2H}) / 2.
pub fn fbm_covariance(s: f64, t: f64, h: HurstParam) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
        return Err(FbmLabError::argument(format!(
            "covariance arguments must lie in [0,1], got ({s}, {t})"
        )));
    }
    let two_h = 2.0 * h.value();
    Ok(0.5 * (s.powf(two_h) + t.powf(two_h) - (s - t).abs().powf(two_h)))
}

/// A sampled fractional Brownian motion trajectory.
#[derive(Debug, Clone)]
pub struct FbmPath {
    grid: TimeGrid,
    values: Vec<f64>,
    hurst: HurstParam,
    seed: u64,
}

impl FbmPath {
    /// Wrap explicit samples (used by tests and deterministic doubles).
    /// Requires `values[0] == 0` and length equality with the grid.
    pub fn from_samples(grid: TimeGrid, values: Vec<f64>, hurst: HurstParam, seed: u64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FbmLabError::argument(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if values[0] != 0.0 {
            return Err(FbmLabError::argument("path must start at 0"));
        }
        Ok(FbmPath { grid, values, hurst, seed })
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    #[inline]
    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

enum Method {
    /// Cholesky factor of the covariance over positive-time grid points.
    Exact(PackedCholesky),
    /// Circulant embedding of fractional Gaussian noise on a uniform grid.
    Circulant { sqrt_eig: Vec<f64>, n_steps: usize },
    /// Single-point grid {0}; nothing to draw.
    Degenerate,
}

/// Reusable sampler: prepares the factorization once, then draws any number
/// of seeds cheaply. `generate_fbm` is the one-shot convenience wrapper.
pub struct FbmSampler {
    grid: TimeGrid,
    hurst: HurstParam,
    method: Method,
}

impl FbmSampler {
    pub fn new(grid: TimeGrid, hurst: HurstParam) -> Result<Self> {
        if grid.len() == 1 {
            return Ok(FbmSampler { grid, hurst, method: Method::Degenerate });
        }
        if let Some(dt) = uniform_step(&grid) {
            let n_steps = grid.len() - 1;
            let sqrt_eig = circulant_sqrt_eigenvalues(n_steps, dt, hurst)?;
            return Ok(FbmSampler { grid, hurst, method: Method::Circulant { sqrt_eig, n_steps } });
        }
        let chol = factor_grid_covariance(&grid, hurst)?;
        Ok(FbmSampler { grid, hurst, method: Method::Exact(chol) })
    }

    /// Force the Cholesky route regardless of grid shape (cross-check path).
    pub fn new_cholesky(grid: TimeGrid, hurst: HurstParam) -> Result<Self> {
        if grid.len() == 1 {
            return Ok(FbmSampler { grid, hurst, method: Method::Degenerate });
        }
        let chol = factor_grid_covariance(&grid, hurst)?;
        Ok(FbmSampler { grid, hurst, method: Method::Exact(chol) })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sample(&self, seed: u64) -> FbmPath {
        let mut stream = GaussianStream::new(seed);
        let values = match &self.method {
            Method::Degenerate => vec![0.0],
            Method::Exact(chol) => {
                let mut z = vec![0.0; chol.dim()];
                stream.fill_standard_normal(&mut z);
                let pos = chol.mul_vec(&z);
                let mut values = Vec::with_capacity(self.grid.len());
                values.push(0.0);
                values.extend_from_slice(&pos);
                values
            }
            Method::Circulant { sqrt_eig, n_steps } => {
                let fgn = draw_fgn(sqrt_eig, *n_steps, &mut stream);
                let mut values = Vec::with_capacity(self.grid.len());
                values.push(0.0);
                let mut acc = 0.0;
                for &inc in fgn.iter().take(*n_steps) {
                    acc += inc;
                    values.push(acc);
                }
                values
            }
        };
        FbmPath { grid: self.grid.clone(), values, hurst: self.hurst, seed }
    }
}

/// Draw one exact-law path on `grid`. Deterministic in (grid, h, seed).
pub fn generate_fbm(grid: &TimeGrid, h: HurstParam, seed: u64) -> Result<FbmPath> {
    Ok(FbmSampler::new(grid.clone(), h)?.sample(seed))
}

fn uniform_step(grid: &TimeGrid) -> Option<f64> {
    if grid.len() < 2 {
        return None;
    }
    let pts = grid.points();
    let dt = pts[1] - pts[0];
    for w in pts.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-12 * dt.max(1.0) {
            return None;
        }
    }
    Some(dt)
}

/// Factor the covariance over the positive-time points of `grid`, with one
/// bounded jitter retry (1e-12 * trace / n on the diagonal) before failing.
fn factor_grid_covariance(grid: &TimeGrid, h: HurstParam) -> Result<PackedCholesky> {
    let pts = &grid.points()[1..];
    let n = pts.len();
    let two_h = 2.0 * h.value();
    let cov = |i: usize, j: usize| {
        let (s, t) = (pts[j], pts[i]);
        0.5 * (s.powf(two_h) + t.powf(two_h) - (t - s).abs().powf(two_h))
    };
    match PackedCholesky::factor(n, cov) {
        Ok(c) => Ok(c),
        Err(_) => {
            let trace: f64 = pts.iter().map(|&t| t.powf(two_h)).sum();
            let jitter = 1e-12 * trace / n as f64;
            PackedCholesky::factor(n, |i, j| if i == j { cov(i, j) + jitter } else { cov(i, j) })
                .map_err(|minor| FbmLabError::Generation { minor })
        }
    }
}

/// Square roots of the circulant eigenvalues of the fGn covariance,
/// pre-divided by sqrt(M) so sampling is a plain FFT of scaled normals.
fn circulant_sqrt_eigenvalues(n_steps: usize, dt: f64, h: HurstParam) -> Result<Vec<f64>> {
    let two_h = 2.0 * h.value();
    let scale = dt.powf(two_h);
    let rho = |k: usize| {
        if k == 0 {
            scale
        } else {
            let k = k as f64;
            0.5 * scale * ((k + 1.0).powf(two_h) + (k - 1.0).powf(two_h) - 2.0 * k.powf(two_h))
        }
    };
    let npad = n_steps.next_power_of_two();
    let m = 2 * npad;
    let mut re = vec![0.0; m];
    let mut im = vec![0.0; m];
    for k in 0..=npad {
        re[k] = rho(k);
    }
    for k in 1..npad {
        re[m - k] = re[k];
    }
    fft_inplace(&mut re, &mut im, false);
    let max_eig = re.iter().cloned().fold(0.0, f64::max);
    let mut sqrt_eig = Vec::with_capacity(m);
    for (k, &lam) in re.iter().enumerate() {
        if lam < -1e-8 * max_eig {
            return Err(FbmLabError::Generation { minor: k });
        }
        sqrt_eig.push((lam.max(0.0) / m as f64).sqrt());
    }
    Ok(sqrt_eig)
}

fn draw_fgn(sqrt_eig: &[f64], n_steps: usize, stream: &mut GaussianStream) -> Vec<f64> {
    let m = sqrt_eig.len();
    let half = m / 2;
    let mut re = vec![0.0; m];
    let mut im = vec![0.0; m];
    re[0] = sqrt_eig[0] * stream.next_standard_normal();
    for j in 1..half {
        let s = sqrt_eig[j] * std::f64::consts::FRAC_1_SQRT_2;
        let a = s * stream.next_standard_normal();
        let b = s * stream.next_standard_normal();
        re[j] = a;
        im[j] = b;
        re[m - j] = a;
        im[m - j] = -b;
    }
    re[half] = sqrt_eig[half] * stream.next_standard_normal();
    fft_inplace(&mut re, &mut im, false);
    re.truncate(n_steps);
    re
}

/// Conditional Gaussian law of the path at `new_points`, given the values
/// already revealed on `path.grid`: mean vector and a Cholesky factor of the
/// conditional covariance, in the order of `new_points`.
pub struct ConditionalLaw {
    pub mean: Vec<f64>,
    pub chol: PackedCholesky,
}

pub fn conditional_law(path: &FbmPath, new_points: &[f64]) -> Result<ConditionalLaw> {
    let h = path.hurst();
    for &t in new_points {
        if !(0.0..=1.0).contains(&t) {
            return Err(FbmLabError::argument(format!("new point {t} outside [0,1]")));
        }
        if path.grid().points().iter().any(|&g| (g - t).abs() < 1e-15) {
            return Err(FbmLabError::argument(format!(
                "new point {t} coincides with an existing grid point"
            )));
        }
    }
    let mut sorted = new_points.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in sorted.windows(2) {
        if w[1] - w[0] < 1e-15 {
            return Err(FbmLabError::argument("new points must be distinct"));
        }
    }

    let existing = &path.grid().points()[1..];
    let xvals = &path.values()[1..];
    let p = existing.len();
    let k = new_points.len();
    let two_h = 2.0 * h.value();
    let cov = |s: f64, t: f64| 0.5 * (s.powf(two_h) + t.powf(two_h) - (s - t).abs().powf(two_h));

    if p == 0 {
        // unconditional law over the new points
        let chol = PackedCholesky::factor(k, |i, j| cov(new_points[i], new_points[j]))
            .map_err(|minor| FbmLabError::Generation { minor })?;
        return Ok(ConditionalLaw { mean: vec![0.0; k], chol });
    }

    let chol_e = PackedCholesky::factor(p, |i, j| cov(existing[i], existing[j]))
        .map_err(|minor| FbmLabError::Generation { minor })?;

    // w_col[c] = Sigma_11^{-1} Sigma_12[:, c]
    let mut w_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    for &t_new in new_points {
        let mut col: Vec<f64> = existing.iter().map(|&t_e| cov(t_e, t_new)).collect();
        chol_e.solve_in_place(&mut col);
        w_cols.push(col);
    }

    let mean: Vec<f64> = w_cols
        .iter()
        .map(|col| col.iter().zip(xvals).map(|(w, x)| w * x).sum())
        .collect();

    let cross = |a: usize, b: usize| -> f64 {
        // Sigma_12[:, a] dot w_cols[b]
        existing
            .iter()
            .enumerate()
            .map(|(i, &t_e)| cov(t_e, new_points[a]) * w_cols[b][i])
            .sum()
    };
    let schur = |i: usize, j: usize| cov(new_points[i], new_points[j]) - cross(i, j);
    let chol = match PackedCholesky::factor(k, schur) {
        Ok(c) => c,
        Err(_) => {
            let trace: f64 = (0..k).map(|i| schur(i, i)).sum();
            let jitter = 1e-12 * trace.abs().max(1e-300) / k as f64;
            PackedCholesky::factor(k, |i, j| if i == j { schur(i, j) + jitter } else { schur(i, j) })
                .map_err(|minor| FbmLabError::Generation { minor })?
        }
    };
    Ok(ConditionalLaw { mean, chol })
}

/// Refine `path` onto the merged grid, drawing the new values from the exact
/// conditional (bridge) law. Deterministic in (path, new_points, seed).
pub fn conditional_extension(path: &FbmPath, new_points: &TimeGrid, seed: u64) -> Result<FbmPath> {
    // `new_points` reuses TimeGrid for validation; its leading 0 is ignored
    // if present, since 0 always belongs to the base grid.
    let extras: Vec<f64> = new_points
        .points()
        .iter()
        .copied()
        .filter(|&t| t > 0.0)
        .collect();
    if extras.is_empty() {
        return Ok(path.clone());
    }
    let law = conditional_law(path, &extras)?;
    let mut z = vec![0.0; extras.len()];
    GaussianStream::new(seed).fill_standard_normal(&mut z);
    let draw = law.chol.mul_vec(&z);
    let new_values: Vec<f64> = law.mean.iter().zip(&draw).map(|(m, d)| m + d).collect();

    let merged = path.grid().merged_with(&extras)?;
    let mut values = Vec::with_capacity(merged.len());
    for &t in merged.points() {
        if let Some(i) = path.grid().points().iter().position(|&g| (g - t).abs() < 1e-15) {
            values.push(path.value(i));
        } else {
            let j = extras.iter().position(|&e| (e - t).abs() < 1e-15).unwrap();
            values.push(new_values[j]);
        }
    }
    FbmPath::from_samples(merged, values, path.hurst(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seed;

    fn h(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(fbm_covariance(1.0, 1.0, h(0.3)).unwrap(), 1.0);
        assert_eq!(fbm_covariance(1.0, 1.0, h(0.9)).unwrap(), 1.0);
        for &(s, t) in &[(0.2, 0.7), (0.5, 0.5), (0.0, 0.4)] {
            let c = fbm_covariance(s, t, h(0.5)).unwrap();
            assert!((c - s.min(t)).abs() < 1e-15);
        }
        let c = fbm_covariance(0.25, 1.0, h(0.75)).unwrap();
        assert!((c - 0.237_740_473_6).abs() < 1e-9, "got {c}");
        assert!(fbm_covariance(1.2, 0.5, h(0.7)).is_err());
        // symmetry
        let a = fbm_covariance(0.3, 0.8, h(0.65)).unwrap();
        let b = fbm_covariance(0.8, 0.3, h(0.65)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn brownian_increment_variance_is_exact_in_covariance() {
        let hb = h(0.5);
        for &(s, t) in &[(0.1, 0.35), (0.5, 0.9), (0.0, 1.0)] {
            let css = fbm_covariance(s, s, hb).unwrap();
            let ctt = fbm_covariance(t, t, hb).unwrap();
            let cst = fbm_covariance(s, t, hb).unwrap();
            assert!((ctt + css - 2.0 * cst - (t - s).abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn single_point_grid_yields_zero_path() {
        let g = TimeGrid::new(vec![0.0]).unwrap();
        let p = generate_fbm(&g, h(0.7), 123).unwrap();
        assert_eq!(p.values(), &[0.0]);
    }

    #[test]
    fn generation_is_deterministic() {
        let g = TimeGrid::uniform(64).unwrap();
        let a = generate_fbm(&g, h(0.7), 99).unwrap();
        let b = generate_fbm(&g, h(0.7), 99).unwrap();
        assert_eq!(a.values(), b.values());
        let c = generate_fbm(&g, h(0.7), 100).unwrap();
        assert_ne!(a.values(), c.values());

        // non-uniform grid goes through Cholesky; same contract
        let g2 = TimeGrid::new(vec![0.0, 0.1, 0.3, 0.35, 0.9]).unwrap();
        let d = generate_fbm(&g2, h(0.6), 5).unwrap();
        let e = generate_fbm(&g2, h(0.6), 5).unwrap();
        assert_eq!(d.values(), e.values());
    }

    /// Monte Carlo cross-check: the circulant fast path and the exact
    /// Cholesky route must produce the same law. Compare Var(B_1) and
    /// Cov(B_{1/2}, B_1) on a uniform grid within MC bands.
    #[test]
    fn circulant_matches_cholesky_in_law() {
        let g = TimeGrid::uniform(64).unwrap();
        let hh = h(0.7);
        let fast = FbmSampler::new(g.clone(), hh).unwrap();
        assert!(matches!(fast.method, Method::Circulant { .. }));
        let exact = FbmSampler::new_cholesky(g.clone(), hh).unwrap();

        let n = 4000;
        let stats = |sampler: &FbmSampler, master: u64| {
            let mut var1 = 0.0;
            let mut cov_half = 0.0;
            for i in 0..n {
                let p = sampler.sample(derive_seed(master, i));
                let b1 = *p.values().last().unwrap();
                let bh = p.value(32);
                var1 += b1 * b1;
                cov_half += b1 * bh;
            }
            (var1 / n as f64, cov_half / n as f64)
        };
        let (v_fast, c_fast) = stats(&fast, 11);
        let (v_exact, c_exact) = stats(&exact, 12);
        let se_var = (2.0f64 / n as f64).sqrt(); // Var(B_1^2) = 2 for N(0,1)
        assert!((v_fast - 1.0).abs() < 4.0 * se_var, "circulant var {v_fast}");
        assert!((v_exact - 1.0).abs() < 4.0 * se_var, "cholesky var {v_exact}");
        let c_true = fbm_covariance(0.5, 1.0, hh).unwrap();
        assert!((c_fast - c_true).abs() < 0.05, "circulant cov {c_fast} vs {c_true}");
        assert!((c_exact - c_true).abs() < 0.05, "cholesky cov {c_exact} vs {c_true}");
    }

    #[test]
    fn conditional_extension_identity_on_empty() {
        let g = TimeGrid::uniform(8).unwrap();
        let p = generate_fbm(&g, h(0.7), 3).unwrap();
        let q = conditional_extension(&p, &TimeGrid::new(vec![0.0]).unwrap(), 77).unwrap();
        assert_eq!(p.values(), q.values());
    }

    #[test]
    fn brownian_bridge_midpoint_mean() {
        // For H = 1/2, the conditional mean at the midpoint of (t_i, t_{i+1})
        // is the average of the endpoint values.
        let g = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let p = generate_fbm(&g, h(0.5), 21).unwrap();
        let law = conditional_law(&p, &[0.75]).unwrap();
        let expect = 0.5 * (p.value(1) + p.value(2));
        assert!((law.mean[0] - expect).abs() < 1e-10, "{} vs {expect}", law.mean[0]);
    }

    /// Dense-conditioning oracle on the 3-point covariance matrix: condition
    /// a H = 0.7 path on {0, 1} and check the conditional mean at 0.5 against
    /// an independent 2x2 solve (the time-0 coordinate is deterministic).
    #[test]
    fn conditional_mean_matches_dense_oracle() {
        let g = TimeGrid::new(vec![0.0, 0.4, 1.0]).unwrap();
        let hh = h(0.7);
        let p = generate_fbm(&g, hh, 8).unwrap();
        let law = conditional_law(&p, &[0.5]).unwrap();

        // oracle: solve [c(.4,.4) c(.4,1); c(1,.4) c(1,1)] w = [c(.4,.5); c(1,.5)]
        let c = |s: f64, t: f64| fbm_covariance(s, t, hh).unwrap();
        let (a11, a12, a22) = (c(0.4, 0.4), c(0.4, 1.0), c(1.0, 1.0));
        let (b1, b2) = (c(0.4, 0.5), c(1.0, 0.5));
        let det = a11 * a22 - a12 * a12;
        let w1 = (b1 * a22 - b2 * a12) / det;
        let w2 = (a11 * b2 - a12 * b1) / det;
        let oracle = w1 * p.value(1) + w2 * p.value(2);
        assert!((law.mean[0] - oracle).abs() < 1e-12, "{} vs {oracle}", law.mean[0]);

        // conditional variance must be positive and below the marginal
        let var = law.chol.entry(0, 0).powi(2);
        assert!(var > 0.0 && var < c(0.5, 0.5));
    }

    #[test]
    fn conditional_extension_rejects_overlap() {
        let g = TimeGrid::uniform(4).unwrap();
        let p = generate_fbm(&g, h(0.7), 1).unwrap();
        let np = TimeGrid::new(vec![0.0, 0.25]).unwrap();
        assert!(conditional_extension(&p, &np, 9).is_err());
    }

    #[test]
    fn conditional_extension_preserves_existing_values() {
        let g = TimeGrid::uniform(8).unwrap();
        let p = generate_fbm(&g, h(0.8), 14).unwrap();
        let np = TimeGrid::new(vec![0.0, 0.0625, 0.4375]).unwrap();
        let q = conditional_extension(&p, &np, 15).unwrap();
        assert_eq!(q.len(), p.len() + 2);
        for (i, &t) in p.grid().points().iter().enumerate() {
            let j = q.grid().points().iter().position(|&x| x == t).unwrap();
            assert_eq!(q.value(j), p.value(i));
        }
    }
}
