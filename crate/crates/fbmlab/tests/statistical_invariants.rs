//! Distributional invariants of the generator and Monte Carlo checks of the
//! construction diagnostics at module scale.

use fbmlab::blocks::BlockPartition;
use fbmlab::claims::{ClaimKind, ClaimSpec, MarkPayoff};
use fbmlab::constructions::{
    build_divergent_integrand, choose_replication_params, improper_representation,
    replicate_holder_claim, Approximator, DivergentParams,
};
use fbmlab::frac::{integral_bound_check, rs_sum_left};
use fbmlab::grid::{AlphaParam, HurstParam, TimeGrid};
use fbmlab::fbm::FbmSampler;
use fbmlab::rng::derive_seed;
use fbmlab::verify::{holder_exponent_estimate, ks_two_sample};
use rayon::prelude::*;

fn h(v: f64) -> HurstParam {
    HurstParam::new(v).unwrap()
}

/// Two-sample KS acceptance threshold at level 0.01.
fn ks_crit_two_sample(n: usize, m: usize) -> f64 {
    1.628 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Terminal variance at scale: Var(B_1) = 1 within Monte Carlo error over
/// 10^4 seeds on a 2^12 uniform grid (the circulant fast path).
#[test]
fn terminal_variance_is_one() {
    let grid = TimeGrid::uniform(1 << 12).unwrap();
    let sampler = FbmSampler::new(grid, h(0.7)).unwrap();
    let n = 10_000u64;
    let sums: (f64, f64) = (0..n)
        .into_par_iter()
        .map(|i| {
            let b1 = *sampler.sample(derive_seed(100, i)).values().last().unwrap();
            (b1, b1 * b1)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = sums.0 / n as f64;
    let var = sums.1 / n as f64 - mean * mean;
    // Var of the sample variance of N(0,1) is ~2/n
    let se = (2.0 / n as f64).sqrt();
    assert!((var - 1.0).abs() < 3.0 * se, "var = {var}, band = {}", 3.0 * se);
}

/// At H = 1/2 the process is standard Brownian motion: increment variances
/// equal the time step within Monte Carlo error.
#[test]
fn brownian_reduction_has_linear_increment_variance() {
    let grid = TimeGrid::uniform(8).unwrap();
    let sampler = FbmSampler::new(grid, h(0.5)).unwrap();
    let n = 8000u64;
    let sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(99, i));
            let d = p.value(3) - p.value(2);
            d * d
        })
        .collect();
    let var = sums.iter().sum::<f64>() / n as f64;
    let dt = 1.0 / 8.0;
    let se = dt * (2.0 / n as f64).sqrt();
    assert!((var - dt).abs() < 4.0 * se, "var {var} vs dt {dt}");
}

/// Stationary increments: the law of B_{t+d} - B_t does not depend on t.
/// Two disjoint windows, independent path banks, 5000 samples each.
#[test]
fn increments_are_stationary() {
    let grid = TimeGrid::uniform(16).unwrap();
    let sampler = FbmSampler::new(grid, h(0.7)).unwrap();
    let n = 5000u64;
    let early: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(101, i));
            p.value(3) - p.value(2) // increment over [1/8, 3/16]
        })
        .collect();
    let late: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(102, i));
            p.value(13) - p.value(12) // same lag, disjoint window
        })
        .collect();
    let d = ks_two_sample(&early, &late).unwrap();
    let crit = ks_crit_two_sample(early.len(), late.len());
    assert!(d < crit, "KS {d:.4} >= critical {crit:.4}");
}

/// Self-similarity: a^{-H} B_{a t} has the law of B_t.
#[test]
fn paths_are_self_similar() {
    let hv = 0.7;
    let grid = TimeGrid::uniform(16).unwrap();
    let sampler = FbmSampler::new(grid, h(hv)).unwrap();
    let n = 5000u64;
    let a = 0.5f64;
    let scaled: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(103, i));
            a.powf(-hv) * p.value(8) // a^{-H} B_{1/2}
        })
        .collect();
    let raw: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(104, i));
            p.value(16) // B_1
        })
        .collect();
    let d = ks_two_sample(&scaled, &raw).unwrap();
    let crit = ks_crit_two_sample(scaled.len(), raw.len());
    assert!(d < crit, "KS {d:.4} >= critical {crit:.4}");
}

/// The a-priori integral bound holds on every seed when the integrand is
/// the divergent construction itself.
#[test]
fn integral_bound_holds_for_divergent_integrand() {
    let hh = h(0.75);
    let al = AlphaParam::new(0.35).unwrap();
    let part = BlockPartition::new(1.2, 15, 16).unwrap();
    let grid = TimeGrid::uniform(512)
        .unwrap()
        .merged_with(&part.subgrid_points_for_step(1.0 / 512.0))
        .unwrap();
    let sampler = FbmSampler::new(grid, hh).unwrap();
    let params = DivergentParams::new(part, 0.1);
    let held: usize = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(105, i));
            let (integrand, _) = build_divergent_integrand(&p, &params).unwrap();
            let r = integral_bound_check(&integrand, &p, 1.0, al).unwrap();
            usize::from(r.holds)
        })
        .sum();
    assert_eq!(held, 100, "bound held on {held}/100 seeds");
}

/// Improper representation of B_{0.9}: the tracking gap at the partition
/// boundaries shrinks with the block count and ends below 0.02 in the
/// median over 200 seeds.
#[test]
fn improper_representation_tracks_a_late_mark() {
    let hh = h(0.7);
    let gamma = 1.4;
    let part = BlockPartition::new(gamma, 250, 16).unwrap();
    let grid = TimeGrid::new(vec![0.0, 0.9])
        .unwrap()
        .merged_with(&part.subgrid_points())
        .unwrap();
    let sampler = FbmSampler::new(grid, hh).unwrap();
    let beta = 0.5 * (1.0 / (gamma * 0.7) - 1.0);
    let params = DivergentParams::new(part.clone(), beta);
    let mark = 0.9f64;

    let gaps: Vec<(f64, f64, f64)> = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(106, i));
            let mark_idx = p.grid().points().iter().position(|&x| x == mark).unwrap();
            let approx: &Approximator = &|_n, t_n, g, vals| {
                // B_{0.9 AND t_n}, read from the revealed prefix
                let t_eff = mark.min(t_n);
                let idx = g
                    .points()
                    .iter()
                    .position(|&x| (x - t_eff).abs() < 1e-12)
                    .unwrap();
                vals[idx.min(vals.len() - 1)]
            };
            let out = improper_representation(&p, approx, &params).unwrap();
            let xi = p.value(mark_idx);
            let x_at = |n: usize| {
                let t_n = part.boundary(n);
                let idx = p.grid().points().iter().position(|&x| (x - t_n).abs() < 1e-12).unwrap();
                out.trajectory[idx]
            };
            (
                (x_at(100) - xi).abs(),
                (x_at(175) - xi).abs(),
                (x_at(250) - xi).abs(),
            )
        })
        .collect();

    let med = |f: &dyn Fn(&(f64, f64, f64)) -> f64| {
        let mut v: Vec<f64> = gaps.iter().map(f).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let m100 = med(&|g| g.0);
    let m175 = med(&|g| g.1);
    let m250 = med(&|g| g.2);
    assert!(
        m100 >= m175 && m175 >= m250,
        "median gap not decreasing: {m100:.4} / {m175:.4} / {m250:.4}"
    );
    assert!(m250 < 0.02, "median terminal gap {m250:.4} >= 0.02");
}

/// Regularity of the replication capital path: the estimated Holder
/// exponent stays above alpha - 0.1, the necessity-direction diagnostic.
#[test]
fn replication_capital_is_holder_regular() {
    let hh = h(0.7);
    let rp = choose_replication_params(hh, 0.42).unwrap();
    let part = BlockPartition::new(rp.gamma, 15, 32).unwrap();
    let grid = TimeGrid::uniform(2048)
        .unwrap()
        .merged_with(&part.subgrid_points_for_step(1.0 / 2048.0))
        .unwrap();
    let sampler = FbmSampler::new(grid, hh).unwrap();
    let claim = ClaimSpec::new(
        ClaimKind::FunctionalOfMarks {
            marks: vec![0.5],
            payoff: MarkPayoff::SquareOfMark,
        },
        0.42,
    )
    .unwrap();

    let mut estimates: Vec<f64> = (0..40u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(107, i));
            let out = replicate_holder_claim(&p, &claim, &rp, &part).unwrap();
            // capital path: running integral of the strategy
            let n = p.len();
            let mut capital = Vec::with_capacity(n);
            capital.push(0.0);
            let mut acc = 0.0;
            for k in 0..n - 1 {
                acc += out.integrand.value(k) * (p.value(k + 1) - p.value(k));
                capital.push(acc);
            }
            let dt = 1.0 / (n as f64 - 1.0);
            holder_exponent_estimate(&capital, dt).unwrap()
        })
        .collect();
    estimates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = estimates[estimates.len() / 2];
    let floor = rp.alpha.value() - 0.1;
    assert!(
        median >= floor,
        "median capital regularity {median:.3} below alpha - 0.1 = {floor:.3}"
    );
}

/// The emitted divergent integrand integrates (left sums) to the reported
/// profile on arbitrary sub-intervals, not only at the end.
#[test]
fn divergent_integrand_integrates_to_profile_prefixes() {
    let hh = h(0.75);
    let part = BlockPartition::new(1.2, 12, 16).unwrap();
    let grid = TimeGrid::uniform(128)
        .unwrap()
        .merged_with(&part.subgrid_points_for_step(1.0 / 128.0))
        .unwrap();
    let sampler = FbmSampler::new(grid, hh).unwrap();
    let params = DivergentParams::new(part.clone(), 0.1);
    for seed in 0..10u64 {
        let p = sampler.sample(derive_seed(108, seed));
        let (integrand, _) = build_divergent_integrand(&p, &params).unwrap();
        let profile = fbmlab::constructions::divergence_profile(&p, &params).unwrap();
        for n in [4usize, 8, 12] {
            let ls = rs_sum_left(&integrand, &p, 0.0, part.boundary(n)).unwrap();
            let v = profile[n].1;
            assert!(
                (ls - v).abs() < 1e-10 * (1.0 + v),
                "seed {seed} block {n}: {ls} vs {v}"
            );
        }
    }
}
