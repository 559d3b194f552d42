//! The fractional (B,S)-market: bond and stock dynamics, self-financing
//! portfolio ledgers in discounted terms, and the trading constructions
//! built on the stopping-time integrands: strong arbitrage, prescribed
//! terminal distributions, weak hedging and the drift-corrected Holder
//! hedge.
//!
//! Discounted capital follows dC = pi1 dX with
//! dX = (mu - r) X dt + sigma X dB, so a strategy built from a divergent
//! integrand phi via pi1 = phi / X moves C by phi (mu - r) dt + sigma phi
//! dB: the drift part is accumulated with a left rule and the stochastic
//! part carries the same per-block closed-form ledger as the plain
//! constructions, with sigma scaling. Every stop rescales the strategy's
//! final active step so the discrete capital lands exactly on its target.

use crate::blocks::BlockPartition;
use crate::claims::{claim_value_at_index, ClaimSpec};
use crate::constructions::{
    f_beta, CaseLabel, DivergentParams, ReplicationParams, StoppingRecord,
};
use crate::error::{FbmLabError, Result};
use crate::fbm::FbmPath;
use crate::frac::{gls_integral, Integrand};
use crate::grid::AlphaParam;
use crate::stats::norm_cdf;

/// Deterministic interest-rate curves; sampled on the grid at load time.
#[derive(Debug, Clone)]
pub enum RateSpec {
    Constant(f64),
    /// r(t) = base + amplitude * sin(2 pi cycles t)
    Sine { base: f64, amplitude: f64, cycles: f64 },
}

impl RateSpec {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            RateSpec::Constant(r) => *r,
            RateSpec::Sine { base, amplitude, cycles } => {
                base + amplitude * (2.0 * std::f64::consts::PI * cycles * t).sin()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MarketParams {
    pub s0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub rate: RateSpec,
    /// non-random bound with |r_t| <= r_max
    pub r_max: f64,
}

impl MarketParams {
    pub fn validate(&self, grid_points: &[f64]) -> Result<()> {
        if !(self.s0 > 0.0) {
            return Err(FbmLabError::configuration("s0 outside (0, inf)"));
        }
        if !(self.sigma > 0.0) {
            return Err(FbmLabError::configuration("sigma outside (0, inf)"));
        }
        if !(self.r_max >= 0.0) {
            return Err(FbmLabError::configuration("r_max outside [0, inf)"));
        }
        for &t in grid_points {
            let r = self.rate.at(t);
            if r.abs() > self.r_max + 1e-12 {
                return Err(FbmLabError::configuration(format!(
                    "rate bound violated: |r({t})| = {} > r_max = {}",
                    r.abs(),
                    self.r_max
                )));
            }
        }
        Ok(())
    }
}

/// Bond, stock and discounted-stock trajectories over one path.
#[derive(Debug, Clone)]
pub struct MarketPath {
    path: FbmPath,
    params: MarketParams,
    bond: Vec<f64>,
    stock: Vec<f64>,
    discounted: Vec<f64>,
    rates: Vec<f64>,
}

impl MarketPath {
    #[inline]
    pub fn path(&self) -> &FbmPath {
        &self.path
    }

    #[inline]
    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    #[inline]
    pub fn bond(&self) -> &[f64] {
        &self.bond
    }

    #[inline]
    pub fn stock(&self) -> &[f64] {
        &self.stock
    }

    #[inline]
    pub fn discounted(&self) -> &[f64] {
        &self.discounted
    }

    #[inline]
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bond.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bond.is_empty()
    }

    /// Contribution of one accounting step per unit of pi1:
    /// X_k ((mu - r_k) dt + sigma dB). Shared by the walkers and the ledger
    /// so exact hits survive re-accounting bit for bit.
    #[inline]
    fn step_factor(&self, k: usize) -> f64 {
        let pts = self.path.grid().points();
        let dt = pts[k + 1] - pts[k];
        let db = self.path.value(k + 1) - self.path.value(k);
        self.discounted[k] * ((self.params.mu - self.rates[k]) * dt + self.params.sigma * db)
    }

    /// Unsigned accounting movement of a unit of the underlying integrand
    /// phi on step k: phi ((mu - r_k) dt + sigma dB).
    #[inline]
    fn phi_step(&self, phi: f64, k: usize) -> f64 {
        let pts = self.path.grid().points();
        let dt = pts[k + 1] - pts[k];
        let db = self.path.value(k + 1) - self.path.value(k);
        phi * ((self.params.mu - self.rates[k]) * dt + self.params.sigma * db)
    }
}

/// Evaluate the exact exponential dynamics on the grid; the rate integral
/// uses the trapezoid rule.
pub fn simulate_market(path: &FbmPath, params: &MarketParams) -> Result<MarketPath> {
    params.validate(path.grid().points())?;
    let pts = path.grid().points();
    let n = pts.len();
    let rates: Vec<f64> = pts.iter().map(|&t| params.rate.at(t)).collect();
    let mut bond = Vec::with_capacity(n);
    let mut cum = 0.0;
    bond.push(1.0);
    for k in 1..n {
        cum += 0.5 * (rates[k - 1] + rates[k]) * (pts[k] - pts[k - 1]);
        bond.push(cum.exp());
    }
    let stock: Vec<f64> = pts
        .iter()
        .zip(path.values())
        .map(|(&t, &b)| params.s0 * (params.mu * t + params.sigma * b).exp())
        .collect();
    let discounted: Vec<f64> = stock.iter().zip(&bond).map(|(s, b)| s / b).collect();
    Ok(MarketPath {
        path: path.clone(),
        params: params.clone(),
        bond,
        stock,
        discounted,
        rates,
    })
}

/// The integral of `a` against the discounted stock over [0, t]:
/// a trapezoid Lebesgue part for a (mu - r) X plus the gLS part for
/// sigma a X against the driving path.
pub fn integrate_against_x(
    a: &Integrand,
    m: &MarketPath,
    t: f64,
    alpha: AlphaParam,
) -> Result<f64> {
    if a.grid().points() != m.path().grid().points() {
        return Err(FbmLabError::argument("integrand and market grids differ"));
    }
    let pts = m.path().grid().points();
    let it = pts
        .iter()
        .position(|&x| (x - t).abs() < 1e-12)
        .ok_or_else(|| FbmLabError::argument(format!("t = {t} is not a grid point")))?;

    // Lebesgue part
    let integrand_drift: Vec<f64> = (0..=it)
        .map(|k| a.value(k) * (m.params.mu - m.rates[k]) * m.discounted[k])
        .collect();
    let mut drift = 0.0;
    for k in 0..it {
        drift += 0.5 * (integrand_drift[k] + integrand_drift[k + 1]) * (pts[k + 1] - pts[k]);
    }

    // pathwise part
    let ax: Vec<f64> = a
        .values()
        .iter()
        .zip(&m.discounted)
        .map(|(av, xv)| av * xv)
        .collect();
    let ax_integrand = Integrand::new(
        m.path().grid().clone(),
        ax,
        m.path().hurst().value().min(a.holder()),
    )?;
    let stochastic = gls_integral(&ax_integrand, m.path(), pts[0], t, alpha)?;

    Ok(drift + m.params.sigma * stochastic)
}

/// Bond units, stock units and the resulting capital trajectories.
#[derive(Debug, Clone)]
pub struct PortfolioLedger {
    pub pi0: Vec<f64>,
    pub pi1: Vec<f64>,
    /// V_t = pi0 B + pi1 S
    pub value: Vec<f64>,
    /// C_t = V_t / B_t
    pub discounted: Vec<f64>,
}

impl PortfolioLedger {
    /// Largest bookkeeping residual |V - (pi0 B + pi1 S)| over the grid.
    pub fn self_financing_residual(&self, m: &MarketPath) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.value.len() {
            let recomputed = self.pi0[k] * m.bond[k] + self.pi1[k] * m.stock[k];
            worst = worst.max((recomputed - self.value[k]).abs());
        }
        worst
    }

    /// Largest |C B - V| over the grid.
    pub fn discount_residual(&self, m: &MarketPath) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.value.len() {
            worst = worst.max((self.discounted[k] * m.bond[k] - self.value[k]).abs());
        }
        worst
    }
}

/// Build the ledger of a self-financing portfolio from its risky leg:
/// C accumulates pi1-weighted step factors, pi0 is backed out so the value
/// identity V = pi0 B + pi1 S holds exactly.
fn ledger_from_pi1(pi1: &[f64], v0: f64, m: &MarketPath) -> PortfolioLedger {
    let n = m.len();
    let mut discounted = Vec::with_capacity(n);
    let mut c = v0;
    discounted.push(c);
    for k in 0..n - 1 {
        c += pi1[k] * m.step_factor(k);
        discounted.push(c);
    }
    let mut pi0 = Vec::with_capacity(n);
    let mut value = Vec::with_capacity(n);
    for k in 0..n {
        pi0.push(discounted[k] - pi1[k] * m.discounted[k]);
        value.push(discounted[k] * m.bond[k]);
    }
    PortfolioLedger { pi0, pi1: pi1.to_vec(), value, discounted }
}

/// Wrap an adapted risky leg into a full self-financing ledger with initial
/// capital `v0`.
pub fn apply_strategy(
    pi1: &Integrand,
    v0: f64,
    m: &MarketPath,
    alpha: AlphaParam,
) -> Result<PortfolioLedger> {
    alpha.check_against(m.path().hurst())?;
    if pi1.grid().points() != m.path().grid().points() {
        return Err(FbmLabError::argument("strategy and market grids differ"));
    }
    Ok(ledger_from_pi1(pi1.values(), v0, m))
}

/// Threshold for block `n` of a partition of length `scale`.
fn block_threshold(n: usize, beta: f64, scale: f64, hurst: f64) -> f64 {
    scale.powf(hurst) * (n as f64).powf(-1.0 / (1.0 + beta))
}

/// Ledger-walk of the divergent construction against X over index ranges.
///
/// Tracks the unsigned movement `covered`: within a block anchored at
/// B_ref, the ledger candidate is covered + drift so far + sigma *
/// min(|B - B_ref|, th)^{1+beta}. Stops solve the final pi1 step against
/// the shared step factor so the accounting lands exactly; the capital ends
/// at c_start + sign * covered. Writes pi1 = sign * phi / X into `out_pi1`.
#[allow(clippy::too_many_arguments)]
fn walk_divergent_ranges_x(
    m: &MarketPath,
    out_pi1: &mut [f64],
    ranges: &[(usize, usize)],
    thresholds: &[f64],
    beta: f64,
    sign: f64,
    c_start: f64,
    stop_level: f64,
    first_block: usize,
    case_label: CaseLabel,
) -> (Vec<StoppingRecord>, f64, Option<usize>) {
    let bvals = m.path().values();
    let pts = m.path().grid().points();
    let sigma = m.params.sigma;
    let one_p_beta = 1.0 + beta;
    let mut records = Vec::with_capacity(ranges.len());
    let mut covered = 0.0;

    for (k, (&(lo, hi), &th)) in ranges.iter().zip(thresholds).enumerate() {
        let block_no = first_block + k;
        let refv = bvals[lo];
        let mut ls_block = 0.0; // accounting inside the block, unsigned
        let mut drift_block = 0.0; // left-rule drift inside the block
        for u in lo + 1..=hi {
            let dt = pts[u] - pts[u - 1];
            let dev = (bvals[u] - refv).abs();
            let clamped = dev.min(th).powf(one_p_beta);
            let phi_left = f_beta(bvals[u - 1] - refv, beta);
            let drift_step = phi_left * (m.params.mu - m.rates[u - 1]) * dt;
            let step = m.step_factor(u - 1);

            // ledger candidate at u
            let ledger = covered + drift_block + drift_step + sigma * clamped;
            if ledger >= stop_level - 1e-12 * (1.0 + stop_level.abs()) {
                let p = if step.abs() > 1e-300 {
                    sign * (stop_level - covered - ls_block) / step
                } else {
                    sign * phi_left / m.discounted[u - 1]
                };
                out_pi1[u - 1] = p;
                records.push(StoppingRecord {
                    block: block_no,
                    tau: pts[u],
                    triggered: true,
                    case_label,
                });
                return (records, c_start + sign * stop_level, Some(u));
            }

            if dev >= th {
                // block stopping time: land the block on its clamped ledger
                let need_block = drift_block + drift_step + sigma * th.powf(one_p_beta);
                let p = if step.abs() > 1e-300 {
                    sign * (need_block - ls_block) / step
                } else {
                    sign * phi_left / m.discounted[u - 1]
                };
                out_pi1[u - 1] = p;
                covered += need_block;
                records.push(StoppingRecord {
                    block: block_no,
                    tau: pts[u],
                    triggered: true,
                    case_label,
                });
                break;
            }

            if u == hi {
                let need_block = drift_block + drift_step + sigma * dev.powf(one_p_beta);
                let p = if step.abs() > 1e-300 {
                    sign * (need_block - ls_block) / step
                } else {
                    sign * phi_left / m.discounted[u - 1]
                };
                out_pi1[u - 1] = p;
                covered += need_block;
                records.push(StoppingRecord {
                    block: block_no,
                    tau: pts[hi],
                    triggered: false,
                    case_label,
                });
            } else {
                out_pi1[u - 1] = sign * phi_left / m.discounted[u - 1];
                ls_block += m.phi_step(phi_left, u - 1);
                drift_block += drift_step;
            }
        }
    }
    (records, c_start + sign * covered, None)
}

/// Outcome of a level-chasing strategy construction.
#[derive(Debug)]
pub struct SteeredOutcome {
    pub ledger: PortfolioLedger,
    pub records: Vec<StoppingRecord>,
    pub tau: Option<f64>,
    pub resolved: bool,
    /// the discounted level the construction steers to
    pub target_value: f64,
    /// achieved discounted terminal capital
    pub terminal_discounted: f64,
}

/// Strong arbitrage: zero initial capital, and on resolved paths the
/// discounted capital is steered to c e^{r_max}, so the terminal value
/// V_1 = C_1 B_1 >= c whatever the (bounded) rate path did.
pub fn strong_arbitrage_strategy(
    m: &MarketPath,
    c: f64,
    params: &DivergentParams,
    alpha: AlphaParam,
) -> Result<SteeredOutcome> {
    if !(c > 0.0) {
        return Err(FbmLabError::argument(format!(
            "arbitrage floor must be positive, got {c}"
        )));
    }
    let level = c * m.params.r_max.exp();
    steer_discounted_capital(m, level, params, alpha)
}

/// Prescribed terminal distribution for the discounted capital: steer C_1
/// to g(B_{1/2}) with g the quantile transport of the target law.
pub fn prescribed_terminal_distribution(
    m: &MarketPath,
    target_quantile: &dyn Fn(f64) -> f64,
    params: &DivergentParams,
    alpha: AlphaParam,
) -> Result<SteeredOutcome> {
    let half_idx = m
        .path()
        .grid()
        .points()
        .iter()
        .position(|&x| (x - 0.5).abs() < 1e-12)
        .ok_or_else(|| FbmLabError::argument("1/2 is not a grid point"))?;
    let hurst = m.path().hurst().value();
    let p = norm_cdf(m.path().value(half_idx) * 2f64.powf(hurst)).clamp(1e-12, 1.0 - 1.1e-16);
    let g = target_quantile(p);
    if !g.is_finite() {
        return Err(FbmLabError::argument(format!(
            "target quantile returned a non-finite value at p = {p}"
        )));
    }
    steer_discounted_capital(m, g, params, alpha)
}

/// Shared steering core: run the divergent construction against X on the
/// rebased partition, stopping when the discounted capital covers `level`.
fn steer_discounted_capital(
    m: &MarketPath,
    level: f64,
    params: &DivergentParams,
    alpha: AlphaParam,
) -> Result<SteeredOutcome> {
    let path = m.path();
    params.validate(path.hurst())?;
    alpha.check_against(path.hurst())?;
    let part = &params.partition;
    if (part.boundary(0) - 0.5).abs() > 1e-12 {
        return Err(FbmLabError::configuration(format!(
            "steering partition must start at 1/2, got {}",
            part.boundary(0)
        )));
    }
    let ranges = part.block_index_ranges(path.grid())?;
    let hurst = path.hurst().value();
    let scale = part.length();
    let mut pi1 = vec![0.0; path.len()];

    let (records, terminal, hit) = if level == 0.0 {
        (Vec::new(), 0.0, Some(ranges[0].0))
    } else {
        let thresholds: Vec<f64> = (1..=ranges.len())
            .map(|n| block_threshold(n, params.beta, scale, hurst))
            .collect();
        walk_divergent_ranges_x(
            m,
            &mut pi1,
            &ranges,
            &thresholds,
            params.beta,
            level.signum(),
            0.0,
            level.abs(),
            1,
            CaseLabel::None,
        )
    };

    let ledger = ledger_from_pi1(&pi1, 0.0, m);
    let pts = path.grid().points();
    Ok(SteeredOutcome {
        ledger,
        records,
        tau: hit.map(|u| pts[u]),
        resolved: hit.is_some(),
        target_value: level,
        terminal_discounted: if hit.is_some() { level } else { terminal },
    })
}

/// Nested sub-partition of one block, snapped to grid indices.
fn nested_ranges(
    pts: &[f64],
    lo: usize,
    hi: usize,
    gamma: f64,
    n_sub: usize,
) -> Vec<(usize, usize)> {
    let t0 = pts[lo];
    let len = pts[hi] - t0;
    let norm: f64 = (1..=n_sub).map(|k| (k as f64).powf(-gamma)).sum();
    let mut bounds = vec![lo];
    let mut acc = t0;
    for k in 1..=n_sub {
        acc += len * (k as f64).powf(-gamma) / norm;
        let target = if k == n_sub { pts[hi] } else { acc };
        let prev = *bounds.last().unwrap();
        let mut idx = prev;
        while idx < hi && pts[idx] < target - 1e-12 {
            idx += 1;
        }
        if idx > prev {
            bounds.push(idx);
        }
    }
    if *bounds.last().unwrap() != hi {
        bounds.push(hi);
    }
    bounds.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Case-B style recovery against X: chase `level` inside one block.
#[allow(clippy::too_many_arguments)]
fn nested_chase_x(
    m: &MarketPath,
    out_pi1: &mut [f64],
    lo: usize,
    hi: usize,
    sign: f64,
    c_start: f64,
    level: f64,
    block_no: usize,
) -> (bool, f64, StoppingRecord) {
    let pts = m.path().grid().points();
    let hurst = m.path().hurst().value();
    let gamma = if hurst < 0.83 { 1.2 } else { 0.5 * (1.0 + 1.0 / hurst) };
    let beta = 0.5 * (1.0 / (gamma * hurst) - 1.0);
    let ranges = nested_ranges(pts, lo, hi, gamma, 8);
    let scale = pts[hi] - pts[lo];
    let thresholds: Vec<f64> = (1..=ranges.len())
        .map(|k| block_threshold(k, beta, scale, hurst))
        .collect();
    let (_recs, c_end, hit) = walk_divergent_ranges_x(
        m,
        out_pi1,
        &ranges,
        &thresholds,
        beta,
        sign,
        c_start,
        level,
        1,
        CaseLabel::B,
    );
    let resolved = hit.is_some();
    let tau = hit.map(|u| pts[u]).unwrap_or(pts[hi]);
    (
        resolved,
        c_end,
        StoppingRecord { block: block_no, tau, triggered: resolved, case_label: CaseLabel::B },
    )
}

/// Outcome of the weak hedge.
#[derive(Debug)]
pub struct WeakHedgeOutcome {
    pub ledger: PortfolioLedger,
    pub records: Vec<StoppingRecord>,
    /// V_{t_n} at block boundaries, for convergence diagnostics
    pub value_at_boundaries: Vec<f64>,
    /// the claim payoff on this path
    pub payoff: f64,
}

/// Weak hedge: self-financing on every [0, t], t < 1, with V_t steered
/// along the blocks toward the claim. The hedging cost v0 is arbitrary:
/// the targets xi B_1^{-1} - v0 absorb it.
pub fn weak_hedge(
    m: &MarketPath,
    claim: &ClaimSpec,
    v0: f64,
    params: &DivergentParams,
    alpha: AlphaParam,
) -> Result<WeakHedgeOutcome> {
    let path = m.path();
    params.validate(path.hurst())?;
    alpha.check_against(path.hurst())?;
    let part = &params.partition;
    let ranges = part.block_index_ranges(path.grid())?;
    let pts = path.grid().points();
    let b1 = *m.bond.last().unwrap();
    let mut pi1 = vec![0.0; path.len()];

    // targets: the running integral of pi1 against X chases
    // xi_n = z_{t_n} B_1^{-1} - v0, evaluated on the prefix up to t_n
    let mut records = Vec::with_capacity(ranges.len());
    let mut x = 0.0;
    for n in 1..ranges.len() {
        let (lo, hi) = ranges[n];
        let z_n = claim_value_at_index(claim, path, ranges[n - 1].1)?;
        let target = z_n / b1 - v0;
        let gap = target - x;
        if gap == 0.0 {
            records.push(StoppingRecord {
                block: n,
                tau: pts[lo],
                triggered: true,
                case_label: CaseLabel::B,
            });
            continue;
        }
        let (resolved, c_end, rec) =
            nested_chase_x(m, &mut pi1, lo, hi, gap.signum(), x, gap.abs(), n);
        x = if resolved { target } else { c_end };
        records.push(rec);
    }

    let ledger = ledger_from_pi1(&pi1, v0, m);
    let value_at_boundaries: Vec<f64> = (0..=part.n_max())
        .map(|n| {
            let idx = if n == 0 { ranges[0].0 } else { ranges[n - 1].1 };
            ledger.value[idx]
        })
        .collect();
    let payoff = claim_value_at_index(claim, path, path.len() - 1)?;
    Ok(WeakHedgeOutcome { ledger, records, value_at_boundaries, payoff })
}

/// Outcome of the Holder hedge.
#[derive(Debug)]
pub struct HolderHedgeOutcome {
    pub ledger: PortfolioLedger,
    pub records: Vec<StoppingRecord>,
    pub resolved: bool,
    /// terminal undiscounted value V_1
    pub terminal_value: f64,
    /// the claim payoff on this path
    pub payoff: f64,
    /// blocks where including the drift term moved the trigger decision
    pub drift_trigger_flips: usize,
}

/// The drift-corrected Holder hedge: Case A stops on the verbatim condition
/// n^kappa |int (mu - r) sign(B - B_{t_n}) ds + sigma (B_t - B_{t_n})| =
/// |C_{t_n} - xi_n| with xi_n = z_{t_n} / B_{t_n}; Case B chases the
/// accumulated residual. Exact hits make V_1 = payoff an identity on
/// resolved paths, for any hedging cost v0.
pub fn holder_hedge(
    m: &MarketPath,
    claim: &ClaimSpec,
    v0: f64,
    rp: &ReplicationParams,
    partition: &BlockPartition,
) -> Result<HolderHedgeOutcome> {
    let path = m.path();
    rp.validate(path.hurst())?;
    if (partition.gamma() - rp.gamma).abs() > 1e-9 {
        return Err(FbmLabError::configuration(format!(
            "partition gamma {} does not match replication gamma {}",
            partition.gamma(),
            rp.gamma
        )));
    }
    let ranges = partition.block_index_ranges(path.grid())?;
    if ranges.len() < 2 {
        return Err(FbmLabError::configuration("holder hedge needs at least two blocks"));
    }
    let pts = path.grid().points();
    let bvals = path.values();
    let sigma = m.params.sigma;
    let mut pi1 = vec![0.0; path.len()];

    // xi_n = z_{t_n} / B_{t_n} at block boundaries
    let mut xi = Vec::with_capacity(ranges.len() + 1);
    let first_idx = ranges[0].0;
    xi.push(claim_value_at_index(claim, path, first_idx)? / m.bond[first_idx]);
    for &(_, hi) in &ranges {
        xi.push(claim_value_at_index(claim, path, hi)? / m.bond[hi]);
    }

    let mut records = Vec::with_capacity(ranges.len());
    let mut c = v0;
    let mut on_target = c == xi[0];
    let mut drift_trigger_flips = 0usize;
    records.push(StoppingRecord {
        block: 1,
        tau: pts[ranges[0].1],
        triggered: true,
        case_label: CaseLabel::None,
    });

    for n in 2..=ranges.len() {
        let (lo, hi) = ranges[n - 1];
        let target = xi[n - 1];
        if on_target {
            let delta = target - xi[n - 2];
            if delta == 0.0 {
                records.push(StoppingRecord {
                    block: n,
                    tau: pts[lo],
                    triggered: true,
                    case_label: CaseLabel::A,
                });
                continue;
            }
            let amp = (n as f64).powf(rp.kappa);
            let s_dir = delta.signum();
            let refv = bvals[lo];
            let mut ls_block = 0.0;
            let mut drift_signed = 0.0; // int (mu - r) sign(B - ref) ds
            let mut landed = false;
            let mut flip_seen = false;
            for u in lo + 1..=hi {
                let dt = pts[u] - pts[u - 1];
                drift_signed +=
                    (m.params.mu - m.rates[u - 1]) * (bvals[u - 1] - refv).signum() * dt;
                let with_drift = amp * (drift_signed + sigma * (bvals[u] - refv)).abs();
                let without_drift = amp * (sigma * (bvals[u] - refv)).abs();
                let fires = with_drift >= delta.abs();
                let fires_plain = without_drift >= delta.abs();
                if fires != fires_plain && !flip_seen {
                    drift_trigger_flips += 1;
                    flip_seen = true;
                }
                let step = m.step_factor(u - 1);
                if fires {
                    if step.abs() > 1e-300 {
                        pi1[u - 1] = (delta - ls_block) / step;
                    }
                    c = target;
                    on_target = true;
                    landed = true;
                    records.push(StoppingRecord {
                        block: n,
                        tau: pts[u],
                        triggered: true,
                        case_label: CaseLabel::A,
                    });
                    break;
                }
                if u == hi {
                    // undershoot: land the block on its closed-form movement
                    // amp * s_dir * (drift + sigma |B_end - B_ref|)
                    let move_total =
                        amp * s_dir * (drift_signed + sigma * (bvals[hi] - refv).abs());
                    let p = if step.abs() > 1e-300 {
                        (move_total - ls_block) / step
                    } else {
                        amp * (bvals[u - 1] - refv).signum() * s_dir / m.discounted[u - 1]
                    };
                    pi1[u - 1] = p;
                    c += move_total - ls_block;
                    on_target = false;
                    records.push(StoppingRecord {
                        block: n,
                        tau: pts[hi],
                        triggered: false,
                        case_label: CaseLabel::A,
                    });
                } else {
                    let p = amp * (bvals[u - 1] - refv).signum() * s_dir / m.discounted[u - 1];
                    pi1[u - 1] = p;
                    let contrib = p * step;
                    ls_block += contrib;
                    c += contrib;
                }
            }
            let _ = landed;
        } else {
            let gap = target - c;
            if gap == 0.0 {
                on_target = true;
                records.push(StoppingRecord {
                    block: n,
                    tau: pts[lo],
                    triggered: true,
                    case_label: CaseLabel::B,
                });
                continue;
            }
            let (resolved, c_end, rec) =
                nested_chase_x(m, &mut pi1, lo, hi, gap.signum(), c, gap.abs(), n);
            c = if resolved { target } else { c_end };
            on_target = resolved;
            records.push(rec);
        }
    }

    let ledger = ledger_from_pi1(&pi1, v0, m);
    let b_end = *m.bond.last().unwrap();
    let payoff = claim_value_at_index(claim, path, path.len() - 1)?;
    Ok(HolderHedgeOutcome {
        terminal_value: c * b_end,
        ledger,
        records,
        resolved: on_target,
        payoff,
        drift_trigger_flips,
    })
}
