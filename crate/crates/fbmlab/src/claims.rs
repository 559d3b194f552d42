//! Contingent claims and their adapted approximating processes.
//!
//! A claim is a terminal random variable together with an adapted process
//! z_t whose value at time 1 is the claim payoff. Evaluation at time t only
//! ever sees the path prefix up to t, which makes adaptedness structural
//! rather than a convention to be policed.
//!
//! Stock-linked payoffs embed the lognormal transform S_t = s0 exp(mu t +
//! sigma B_t) directly, so the catalog covers the usual derivative zoo:
//! calls, asian means, digitals, barriers and lookbacks, plus raw functionals
//! of path marks.

use crate::error::{FbmLabError, Result};
use crate::fbm::FbmPath;

/// Payoff descriptors for claims of the form F(B_{s_1 AND t}, ...).
#[derive(Debug, Clone)]
pub enum MarkPayoff {
    /// (B_{s_1})^2
    SquareOfMark,
    /// sum_i w_i B_{s_i}
    WeightedSum(Vec<f64>),
    /// European call on the stock at the single mark, capped so the
    /// payoff stays bounded: min((S_{s_1} - K)^+, cap)
    CallOnStock { strike: f64, cap: f64, s0: f64, mu: f64, sigma: f64 },
    /// Arithmetic mean of the stock over the marks (Asian forward payoff)
    MeanOfStock { s0: f64, mu: f64, sigma: f64 },
}

/// Payoffs reading the whole stopped trajectory through its running extreme.
#[derive(Debug, Clone)]
pub enum SupPayoff {
    /// max of the path on [0, upto]
    RunningMaxPath,
    /// max of the stock on [0, upto]
    LookbackMaxStock { s0: f64, mu: f64, sigma: f64 },
    /// 1 if the stock max on [0, upto] reached `level` (knock-in digital)
    BarrierDigitalStock { level: f64, s0: f64, mu: f64, sigma: f64 },
}

/// Events resolved at a single mark time, for indicator claims.
#[derive(Debug, Clone)]
pub enum IndicatorEvent {
    /// 1_{B_mark > level}
    PathAbove { level: f64 },
    /// 1_{S_mark > level}
    StockAbove { level: f64, s0: f64, mu: f64, sigma: f64 },
}

#[derive(Debug, Clone)]
pub enum ClaimKind {
    /// z_t = F(B_{s_1 AND t}, ..., B_{s_k AND t})
    FunctionalOfMarks { marks: Vec<f64>, payoff: MarkPayoff },
    /// z_t = G({B_{s AND t}, s in [0, upto]})
    SupFunctional { upto: f64, payoff: SupPayoff },
    /// z_t = 1_{event at mark AND t}; constant once the mark is revealed
    Indicator { mark: f64, event: IndicatorEvent },
}

/// A claim together with the Holder exponent of its adapted process, used
/// to size replication parameters.
#[derive(Debug, Clone)]
pub struct ClaimSpec {
    pub kind: ClaimKind,
    pub holder_a: f64,
}

impl ClaimSpec {
    pub fn new(kind: ClaimKind, holder_a: f64) -> Result<Self> {
        if !(holder_a > 0.0) {
            return Err(FbmLabError::configuration(format!(
                "claim holder exponent must be positive, got {holder_a}"
            )));
        }
        let marks: Vec<f64> = match &kind {
            ClaimKind::FunctionalOfMarks { marks, .. } => marks.clone(),
            ClaimKind::SupFunctional { upto, .. } => vec![*upto],
            ClaimKind::Indicator { mark, .. } => vec![*mark],
        };
        if marks.is_empty() {
            return Err(FbmLabError::configuration("claim needs at least one mark time"));
        }
        for &s in &marks {
            if !(0.0..=1.0).contains(&s) {
                return Err(FbmLabError::configuration(format!(
                    "mark time {s} outside [0,1]"
                )));
            }
        }
        if let ClaimKind::Indicator { mark, .. } = &kind {
            if *mark >= 1.0 {
                return Err(FbmLabError::configuration(
                    "indicator claims need the defining event measurable strictly before 1",
                ));
            }
        }
        Ok(ClaimSpec { kind, holder_a })
    }

    pub fn mark_times(&self) -> Vec<f64> {
        match &self.kind {
            ClaimKind::FunctionalOfMarks { marks, .. } => marks.clone(),
            ClaimKind::SupFunctional { upto, .. } => vec![*upto],
            ClaimKind::Indicator { mark, .. } => vec![*mark],
        }
    }
}

#[inline]
fn stock_value(b: f64, t: f64, s0: f64, mu: f64, sigma: f64) -> f64 {
    s0 * (mu * t + sigma * b).exp()
}

/// Index of the grid point at s AND t_cut (both must be grid points).
fn stopped_index(path: &FbmPath, s: f64, cut: usize) -> Result<usize> {
    let target = s.min(path.grid().t(cut));
    path.grid()
        .points()
        .iter()
        .position(|&x| (x - target).abs() < 1e-12)
        .ok_or_else(|| {
            FbmLabError::argument(format!("mark time {target} is not a grid point"))
        })
}

/// The adapted process z_t of the claim, evaluated at grid time `t` using
/// only path values up to t.
pub fn claim_to_adapted_process(claim: &ClaimSpec, path: &FbmPath, t: f64) -> Result<f64> {
    let cut = path
        .grid()
        .points()
        .iter()
        .position(|&x| (x - t).abs() < 1e-12)
        .ok_or_else(|| FbmLabError::argument(format!("t = {t} is not a grid point")))?;
    claim_value_at_index(claim, path, cut)
}

/// Same as [`claim_to_adapted_process`] but indexed; the prefix
/// `path.values()[..=cut]` is the only window read.
pub fn claim_value_at_index(claim: &ClaimSpec, path: &FbmPath, cut: usize) -> Result<f64> {
    let prefix = &path.values()[..=cut];
    match &claim.kind {
        ClaimKind::FunctionalOfMarks { marks, payoff } => {
            let vals: Result<Vec<(f64, f64)>> = marks
                .iter()
                .map(|&s| {
                    let i = stopped_index(path, s, cut)?;
                    Ok((s.min(path.grid().t(cut)), prefix[i]))
                })
                .collect();
            let vals = vals?;
            Ok(match payoff {
                MarkPayoff::SquareOfMark => vals[0].1 * vals[0].1,
                MarkPayoff::WeightedSum(w) => {
                    if w.len() != vals.len() {
                        return Err(FbmLabError::configuration(
                            "weight count must match mark count",
                        ));
                    }
                    w.iter().zip(&vals).map(|(wi, (_, b))| wi * b).sum()
                }
                MarkPayoff::CallOnStock { strike, cap, s0, mu, sigma } => {
                    let (t_eff, b) = vals[0];
                    (stock_value(b, t_eff, *s0, *mu, *sigma) - strike).max(0.0).min(*cap)
                }
                MarkPayoff::MeanOfStock { s0, mu, sigma } => {
                    let sum: f64 = vals
                        .iter()
                        .map(|&(t_eff, b)| stock_value(b, t_eff, *s0, *mu, *sigma))
                        .sum();
                    sum / vals.len() as f64
                }
            })
        }
        ClaimKind::SupFunctional { upto, payoff } => {
            if *upto > *path.grid().points().last().unwrap() + 1e-12 {
                return Err(FbmLabError::argument(format!(
                    "sup-functional horizon {upto} beyond the grid"
                )));
            }
            let hi = stopped_index(path, *upto, cut)?;
            Ok(match payoff {
                SupPayoff::RunningMaxPath => {
                    prefix[..=hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
                SupPayoff::LookbackMaxStock { s0, mu, sigma } => prefix[..=hi]
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| stock_value(b, path.grid().t(i), *s0, *mu, *sigma))
                    .fold(f64::NEG_INFINITY, f64::max),
                SupPayoff::BarrierDigitalStock { level, s0, mu, sigma } => {
                    let hit = prefix[..=hi]
                        .iter()
                        .enumerate()
                        .any(|(i, &b)| stock_value(b, path.grid().t(i), *s0, *mu, *sigma) >= *level);
                    if hit {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
        }
        ClaimKind::Indicator { mark, event } => {
            let i = stopped_index(path, *mark, cut)?;
            let t_eff = path.grid().t(i);
            let b = prefix[i];
            let inside = match event {
                IndicatorEvent::PathAbove { level } => b > *level,
                IndicatorEvent::StockAbove { level, s0, mu, sigma } => {
                    stock_value(b, t_eff, *s0, *mu, *sigma) > *level
                }
            };
            Ok(if inside { 1.0 } else { 0.0 })
        }
    }
}
