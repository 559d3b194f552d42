//! Statistical and analytical oracles: the small-ball estimate, exact
//! sign-change probabilities with their ratio bound, Kolmogorov-Smirnov
//! distances, a sup-increment Holder-regularity estimator, and chain-rule
//! residual sweeps for the pathwise integral.

use crate::error::{FbmLabError, Result};
use crate::fbm::{fbm_covariance, FbmSampler};
use crate::frac::{gls_integral, Integrand};
use crate::grid::{AlphaParam, HurstParam, TimeGrid};
use crate::rng::derive_seed;
use rayon::prelude::*;

/// One named check with its statistic and pass threshold. The direction of
/// the comparison is part of the check's definition and recorded in notes.
#[derive(Debug, Clone)]
pub struct TestVerdict {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
    pub n_samples: usize,
    pub notes: String,
}

/// Per-epsilon entry of the small-ball fit.
#[derive(Debug, Clone)]
pub struct SmallBallPoint {
    pub eps: f64,
    pub p_hat: f64,
    /// no path stayed below eps; p_hat was replaced by the 1/n bound
    pub one_sided: bool,
    /// -log(p_hat) eps^{1/H} / T
    pub c_fit: f64,
}

#[derive(Debug, Clone)]
pub struct SmallBallCheck {
    pub verdict: TestVerdict,
    pub per_eps: Vec<SmallBallPoint>,
    pub c_hat: f64,
}

/// Monte Carlo check of the exponential small-ball bound
/// P(sup_{[0,T]} |B| < eps) <= exp(-c T eps^{-1/H}): fit c as the smallest
/// per-epsilon constant and require it positive. Empty counts at tiny eps
/// degrade to a one-sided bound instead of failing.
pub fn small_ball_check(
    h: HurstParam,
    t_horizon: f64,
    eps_list: &[f64],
    n_paths: usize,
    grid_n: usize,
    master_seed: u64,
) -> Result<SmallBallCheck> {
    if !(t_horizon > 0.0 && t_horizon <= 1.0) {
        return Err(FbmLabError::argument("horizon must lie in (0, 1]"));
    }
    let t_pow_h = t_horizon.powf(h.value());
    for &eps in eps_list {
        if !(eps > 0.0 && eps <= t_pow_h + 1e-12) {
            return Err(FbmLabError::argument(format!(
                "eps = {eps} outside (0, T^H = {t_pow_h}]"
            )));
        }
    }
    let pts: Vec<f64> = (0..=grid_n)
        .map(|i| t_horizon * i as f64 / grid_n as f64)
        .collect();
    let grid = TimeGrid::new(pts)?;
    let sampler = FbmSampler::new(grid, h)?;

    // count sup |B| < eps per eps, over a common path bank
    let counts: Vec<usize> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(master_seed, i));
            let sup = p.values().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            let mut mask = 0usize;
            for (j, &eps) in eps_list.iter().enumerate() {
                if sup < eps {
                    mask |= 1 << j;
                }
            }
            mask
        })
        .fold(
            || vec![0usize; eps_list.len()],
            |mut acc, mask| {
                for (j, a) in acc.iter_mut().enumerate() {
                    if mask & (1 << j) != 0 {
                        *a += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0usize; eps_list.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let inv_h = 1.0 / h.value();
    let mut per_eps = Vec::with_capacity(eps_list.len());
    for (j, &eps) in eps_list.iter().enumerate() {
        let one_sided = counts[j] == 0;
        let p_hat = if one_sided {
            1.0 / n_paths as f64
        } else {
            counts[j] as f64 / n_paths as f64
        };
        let c_fit = -p_hat.ln() * eps.powf(inv_h) / t_horizon;
        per_eps.push(SmallBallPoint { eps, p_hat, one_sided, c_fit });
    }

    // nested events: p_hat must be non-increasing as eps decreases
    let mut sorted = per_eps.clone();
    sorted.sort_by(|a, b| a.eps.partial_cmp(&b.eps).unwrap());
    let monotone = sorted.windows(2).all(|w| w[0].p_hat <= w[1].p_hat + 1e-15);

    let c_hat = per_eps
        .iter()
        .map(|p| p.c_fit)
        .fold(f64::INFINITY, f64::min);
    let one_sided_count = per_eps.iter().filter(|p| p.one_sided).count();
    let passed = c_hat > 0.0 && monotone;
    let verdict = TestVerdict {
        name: format!("small_ball_h{:.2}", h.value()),
        statistic: c_hat,
        threshold: 0.0,
        passed,
        n_samples: n_paths,
        notes: format!(
            "fit over {} eps values ({} one-sided), statistic > threshold required; monotone = {monotone}",
            per_eps.len(),
            one_sided_count
        ),
    };
    Ok(SmallBallCheck { verdict, per_eps, c_hat })
}

/// Monte Carlo covariance fidelity on a uniform grid with `grid_k` positive
/// times: the empirical covariance matrix must match the closed form
/// entrywise within `z_max` standard errors (Gaussian fourth-moment SEs).
pub fn covariance_fidelity_check(
    h: HurstParam,
    grid_k: usize,
    n_paths: usize,
    master_seed: u64,
    z_max: f64,
) -> Result<TestVerdict> {
    let grid = TimeGrid::uniform(grid_k)?;
    let sampler = FbmSampler::new_cholesky(grid.clone(), h)?;
    let dim = grid_k; // positive-time coordinates
    let m = dim * (dim + 1) / 2;
    // fixed chunking keeps the floating-point summation order independent
    // of thread scheduling, so reports stay byte-stable
    let n_chunks = 64u64;
    let chunk_len = (n_paths as u64).div_ceil(n_chunks);
    let partials: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; m];
            let lo = c * chunk_len;
            let hi = ((c + 1) * chunk_len).min(n_paths as u64);
            for i in lo..hi {
                let p = sampler.sample(derive_seed(master_seed, i));
                let v = &p.values()[1..];
                let mut idx = 0;
                for a in 0..dim {
                    for b in 0..=a {
                        acc[idx] += v[a] * v[b];
                        idx += 1;
                    }
                }
            }
            acc
        })
        .collect();
    let mut sums = vec![0.0; m];
    for part in &partials {
        for (s, p) in sums.iter_mut().zip(part) {
            *s += p;
        }
    }

    let mut worst_z = 0.0f64;
    let mut idx = 0;
    for a in 0..dim {
        let ta = grid.t(a + 1);
        for b in 0..=a {
            let tb = grid.t(b + 1);
            let exact = fbm_covariance(ta, tb, h)?;
            let emp = sums[idx] / n_paths as f64;
            // Var(X Y) = c_aa c_bb + c_ab^2 for jointly Gaussian X, Y
            let caa = fbm_covariance(ta, ta, h)?;
            let cbb = fbm_covariance(tb, tb, h)?;
            let se = ((caa * cbb + exact * exact) / n_paths as f64).sqrt();
            worst_z = worst_z.max((emp - exact).abs() / se);
            idx += 1;
        }
    }
    Ok(TestVerdict {
        name: format!("covariance_fidelity_h{:.2}", h.value()),
        statistic: worst_z,
        threshold: z_max,
        passed: worst_z <= z_max,
        n_samples: n_paths,
        notes: format!(
            "statistic <= threshold required; worst entrywise |emp - exact| / SE over {} entries",
            dim * (dim + 1) / 2
        ),
    })
}

/// Orthant probability of a centered bivariate Gaussian pair with
/// correlation rho: P(X Y <= 0) = arccos(rho) / pi.
#[inline]
pub fn orthant_prob_from_rho(rho: f64) -> f64 {
    rho.clamp(-1.0, 1.0).acos() / std::f64::consts::PI
}

/// Exact P(B_s B_t <= 0) through the orthant identity with the normalized
/// fBm correlation. By convention the degenerate s = 0 case returns 1
/// (the product is identically zero).
pub fn sign_change_probability_exact(s: f64, t: f64, h: HurstParam) -> Result<f64> {
    if !(s >= 0.0 && s <= t && t <= 1.0) {
        return Err(FbmLabError::argument(format!(
            "need 0 <= s <= t <= 1, got ({s}, {t})"
        )));
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    let hv = h.value();
    let rho = fbm_covariance(s, t, h)? / (s.powf(hv) * t.powf(hv));
    Ok(orthant_prob_from_rho(rho))
}

#[derive(Debug, Clone)]
pub struct SignChangeCheck {
    pub verdict: TestVerdict,
    /// fitted constant sup P / ((t-s)^H t^{-H}) on the coarse grid
    pub c_hat: f64,
    /// same on the refined grid
    pub c_hat_refined: f64,
    /// worst |MC - exact| in standard-error units
    pub mc_max_z: f64,
}

/// Ratio bound check: the fitted constant sup over (s, t) pairs of
/// P(B_s B_t <= 0) / ((t-s)^H t^{-H}) must be finite, refinement-stable
/// within 10%, and the exact oracle must agree with Monte Carlo within
/// 3 standard errors on every pair of the coarse grid.
pub fn sign_change_bound_check(
    h: HurstParam,
    grid_k: usize,
    n_paths: usize,
    master_seed: u64,
) -> Result<SignChangeCheck> {
    if grid_k < 4 {
        return Err(FbmLabError::argument("need at least a 4-point grid"));
    }
    let sup_ratio = |k: usize| -> Result<f64> {
        let mut worst = 0.0f64;
        let hv = h.value();
        for i in 1..=k {
            let s = i as f64 / k as f64;
            for j in i + 1..=k {
                let t = j as f64 / k as f64;
                let p = sign_change_probability_exact(s, t, h)?;
                let ratio = p / ((t - s).powf(hv) * t.powf(-hv));
                worst = worst.max(ratio);
            }
        }
        Ok(worst)
    };
    let c_hat = sup_ratio(grid_k)?;
    let c_hat_refined = sup_ratio(2 * grid_k)?;
    let drift = (c_hat_refined - c_hat).abs() / c_hat;

    // Monte Carlo cross-validation on the coarse grid
    let pts: Vec<f64> = (0..=grid_k).map(|i| i as f64 / grid_k as f64).collect();
    let grid = TimeGrid::new(pts)?;
    let sampler = FbmSampler::new(grid, h)?;
    let m = grid_k * (grid_k - 1) / 2;
    let counts: Vec<usize> = (0..n_paths as u64)
        .into_par_iter()
        .map(|iseed| {
            let p = sampler.sample(derive_seed(master_seed, iseed));
            let mut local = vec![0usize; m];
            let mut idx = 0;
            for i in 1..=grid_k {
                for j in i + 1..=grid_k {
                    if p.value(i) * p.value(j) <= 0.0 {
                        local[idx] += 1;
                    }
                    idx += 1;
                }
            }
            local
        })
        .reduce(
            || vec![0usize; m],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let mut mc_max_z = 0.0f64;
    let mut idx = 0;
    for i in 1..=grid_k {
        let s = i as f64 / grid_k as f64;
        for j in i + 1..=grid_k {
            let t = j as f64 / grid_k as f64;
            let p_exact = sign_change_probability_exact(s, t, h)?;
            let p_mc = counts[idx] as f64 / n_paths as f64;
            let se = (p_exact * (1.0 - p_exact) / n_paths as f64).sqrt().max(1e-12);
            mc_max_z = mc_max_z.max((p_mc - p_exact).abs() / se);
            idx += 1;
        }
    }

    let passed = c_hat.is_finite() && drift < 0.10 && mc_max_z <= 3.0;
    let verdict = TestVerdict {
        name: format!("sign_change_bound_h{:.2}", h.value()),
        statistic: mc_max_z,
        threshold: 3.0,
        passed,
        n_samples: n_paths,
        notes: format!(
            "statistic <= threshold required; C_hat = {c_hat:.4}, refined = {c_hat_refined:.4}, drift = {:.3}%",
            100.0 * drift
        ),
    };
    Ok(SignChangeCheck { verdict, c_hat, c_hat_refined, mc_max_z })
}

/// Two-sided Kolmogorov-Smirnov statistic of the samples against a CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(FbmLabError::argument("KS statistic needs samples"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((f - i as f64 / n).abs());
    }
    Ok(d)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(FbmLabError::argument("KS statistic needs samples"));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let mut d = 0.0f64;
    // evaluate the ECDF gap only after consuming whole tie groups
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Asymptotic two-sided KS acceptance threshold at level ~1%, with the
/// conventional 1.5 safety factor on the 95% constant.
pub fn ks_threshold(n: usize) -> f64 {
    1.36 * 1.5 / (n as f64).sqrt()
}

/// Holder exponent of a uniformly sampled trajectory: log-log regression of
/// the sup-increment against the lag over dyadic lags. A constant series
/// returns +infinity (perfect regularity).
pub fn holder_exponent_estimate(series: &[f64], dt: f64) -> Result<f64> {
    let n = series.len();
    if n < 64 {
        return Err(FbmLabError::argument(format!(
            "holder estimate needs at least 64 points, got {n}"
        )));
    }
    if !(dt > 0.0) {
        return Err(FbmLabError::argument("dt must be positive"));
    }
    let k_max = (n / 64).max(4);
    let mut lags = Vec::new();
    let mut k = 1usize;
    while k <= k_max {
        lags.push(k);
        k *= 2;
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &lag in &lags {
        let mut sup = 0.0f64;
        for i in 0..n - lag {
            sup = sup.max((series[i + lag] - series[i]).abs());
        }
        if sup > 0.0 {
            xs.push((lag as f64 * dt).ln());
            ys.push(sup.ln());
        }
    }
    if xs.len() < 2 {
        return Ok(f64::INFINITY);
    }
    let nn = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let denom = nn * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Ok(f64::INFINITY);
    }
    Ok((nn * sxy - sx * sy) / denom)
}

/// Chain-rule residual sweep: for each antiderivative pair (F, f) the
/// residual |gLS(f(B), 0, 1) - F(B_1)| / (1 + |F(B_1)|) is summarized by
/// its median over seeds, at each grid size. One verdict per pair checks
/// the threshold at the largest size and monotone decay across sizes.
pub fn ito_residual_suite(
    h: HurstParam,
    alpha: AlphaParam,
    grid_sizes: &[usize],
    n_seeds: usize,
    master_seed: u64,
    median_threshold: f64,
) -> Result<Vec<TestVerdict>> {
    alpha.check_against(h)?;
    type Pair = (&'static str, fn(f64) -> f64, fn(f64) -> f64);
    let cases: [Pair; 3] = [
        ("ito_residual_square", |x| 2.0 * x, |x| x * x),
        (
            "ito_residual_abs_pow_1_1",
            |x| 1.1 * x.abs().powf(0.1) * x.signum(),
            |x| x.abs().powf(1.1),
        ),
        (
            "ito_residual_relu_square",
            |x| 2.0 * x.max(0.0),
            |x| x.max(0.0) * x.max(0.0),
        ),
    ];

    let mut medians: Vec<Vec<f64>> = vec![Vec::new(); cases.len()];
    for &n in grid_sizes {
        let grid = TimeGrid::uniform(n)?;
        let sampler = FbmSampler::new(grid.clone(), h)?;
        let residuals: Vec<[f64; 3]> = (0..n_seeds as u64)
            .into_par_iter()
            .map(|i| {
                let p = sampler.sample(derive_seed(master_seed, i));
                let b1 = *p.values().last().unwrap();
                let mut out = [0.0; 3];
                for (ci, (_, f, big_f)) in cases.iter().enumerate() {
                    let integrand = Integrand::of_path_fn(&p, f);
                    let got = gls_integral(&integrand, &p, 0.0, 1.0, alpha).unwrap();
                    let target = big_f(b1);
                    out[ci] = (got - target).abs() / (1.0 + target.abs());
                }
                out
            })
            .collect();
        for ci in 0..cases.len() {
            let mut rs: Vec<f64> = residuals.iter().map(|r| r[ci]).collect();
            rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians[ci].push(rs[rs.len() / 2]);
        }
    }

    let mut verdicts = Vec::with_capacity(cases.len());
    for (ci, (name, _, _)) in cases.iter().enumerate() {
        let final_median = *medians[ci].last().unwrap();
        // refinement compares the coarsest against the finest size; the
        // intermediate medians are noisy at small seed counts
        let decaying = final_median <= medians[ci][0] * 1.05;
        let passed = final_median < median_threshold && decaying;
        verdicts.push(TestVerdict {
            name: (*name).to_string(),
            statistic: final_median,
            threshold: median_threshold,
            passed,
            n_samples: n_seeds,
            notes: format!(
                "statistic < threshold required; medians across sizes {grid_sizes:?}: {:?}",
                medians[ci]
            ),
        });
    }
    Ok(verdicts)
}
