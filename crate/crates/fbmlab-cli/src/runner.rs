//! Experiment drivers: one function per subcommand, all deterministic in
//! the configuration. Reports carry per-path records plus aggregates that
//! can be recomputed from them; CSV exports are byte-stable.

use crate::config::Config;
use fbmlab::blocks::BlockPartition;
use fbmlab::constructions::{
    build_divergent_integrand, choose_replication_params, divergence_profile,
    improper_representation, prescribed_distribution_integrand, replicate_holder_claim,
    Approximator, CaseLabel, DivergentParams,
};
use fbmlab::claims::claim_value_at_index;
use fbmlab::fbm::FbmSampler;
use fbmlab::grid::TimeGrid;
use fbmlab::market::{
    holder_hedge, simulate_market, strong_arbitrage_strategy, weak_hedge, MarketPath,
};
use fbmlab::report::{fmt_f64, ExperimentReport, PathRecord};
use fbmlab::rng::derive_seed;
use fbmlab::verify::{
    covariance_fidelity_check, ito_residual_suite, ks_statistic, sign_change_bound_check,
    small_ball_check, TestVerdict,
};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "configuration error: {m}"),
            RunError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

type RResult<T> = std::result::Result<T, RunError>;

fn cfg_err(e: impl std::fmt::Display) -> RunError {
    RunError::Config(e.to_string())
}

fn run_err(e: impl std::fmt::Display) -> RunError {
    RunError::Runtime(e.to_string())
}

pub struct RunOutput {
    pub report: ExperimentReport,
    pub files: Vec<PathBuf>,
}

pub const SUBCOMMANDS: &[&str] = &[
    "generate",
    "ito-check",
    "diverge",
    "represent-distribution",
    "represent-improper",
    "replicate",
    "arbitrage",
    "hedge-weak",
    "hedge-holder",
    "verify-small-ball",
    "verify-sign-lemma",
    "verify-all",
];

pub fn run(sub: &str, cfg: &Config) -> RResult<RunOutput> {
    match sub {
        "generate" => generate(cfg),
        "ito-check" => ito_check(cfg),
        "diverge" => diverge(cfg),
        "represent-distribution" => represent_distribution(cfg),
        "represent-improper" => represent_improper(cfg),
        "replicate" => replicate(cfg),
        "arbitrage" => arbitrage(cfg),
        "hedge-weak" => hedge_weak(cfg),
        "hedge-holder" => hedge_holder(cfg),
        "verify-small-ball" => verify_small_ball(cfg),
        "verify-sign-lemma" => verify_sign_lemma(cfg),
        "verify-all" => verify_all(cfg),
        other => Err(RunError::Config(format!(
            "unknown subcommand '{other}' (expected one of {SUBCOMMANDS:?})"
        ))),
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> RResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(run_err)?;
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(run_err)?;
    Ok(path)
}

fn paths_csv(markets: &[(u64, &MarketPath)]) -> String {
    let mut out = String::from("seed_index,t,B,S,X\n");
    for (idx, m) in markets {
        let pts = m.path().grid().points();
        for k in 0..m.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                idx,
                fmt_f64(pts[k]),
                fmt_f64(m.path().value(k)),
                fmt_f64(m.stock()[k]),
                fmt_f64(m.discounted()[k]),
            ));
        }
    }
    out
}

fn ledger_csv(entries: &[(u64, &MarketPath, &fbmlab::market::PortfolioLedger)]) -> String {
    let mut out = String::from("seed_index,t,pi0,pi1,V,C\n");
    for (idx, m, l) in entries {
        let pts = m.path().grid().points();
        for k in 0..l.value.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                idx,
                fmt_f64(pts[k]),
                fmt_f64(l.pi0[k]),
                fmt_f64(l.pi1[k]),
                fmt_f64(l.value[k]),
                fmt_f64(l.discounted[k]),
            ));
        }
    }
    out
}

fn terminals_csv(records: &[PathRecord]) -> String {
    let mut out = String::from("seed_index,resolved,terminal,target\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.index,
            r.resolved,
            fmt_f64(r.terminal),
            fmt_f64(r.target),
        ));
    }
    out
}

fn median(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

/// Base uniform grid merged with the partition's per-block sub-grids.
fn construction_grid(cfg: &Config, part: &BlockPartition) -> RResult<TimeGrid> {
    let base = TimeGrid::uniform(cfg.grid_size).map_err(cfg_err)?;
    base.merged_with(&part.subgrid_points_for_step(1.0 / cfg.grid_size as f64))
        .map_err(run_err)
}

fn sampler_for(cfg: &Config, grid: TimeGrid) -> RResult<FbmSampler> {
    let h = cfg.hurst_param().map_err(cfg_err)?;
    FbmSampler::new(grid, h).map_err(run_err)
}

fn probe_claim(
    claim: &fbmlab::claims::ClaimSpec,
    sampler: &FbmSampler,
    seed: u64,
) -> RResult<()> {
    let p = sampler.sample(seed);
    claim_value_at_index(claim, &p, p.len() - 1)
        .map(|_| ())
        .map_err(|e| RunError::Config(format!("claim incompatible with the grid: {e}")))
}

// ---------------------------------------------------------------- generate

fn generate(cfg: &Config) -> RResult<RunOutput> {
    let grid = TimeGrid::uniform(cfg.grid_size).map_err(cfg_err)?;
    let sampler = sampler_for(cfg, grid)?;
    let mp = cfg.market_params().map_err(cfg_err)?;

    let markets: Vec<(u64, MarketPath)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(cfg.master_seed, i));
            let m = simulate_market(&p, &mp).expect("validated params");
            (i, m)
        })
        .collect();

    let mut report = ExperimentReport::new("generate");
    report.config_echo = cfg.echo();
    let n = markets.len() as f64;
    let mean_b1: f64 = markets.iter().map(|(_, m)| *m.path().values().last().unwrap()).sum::<f64>() / n;
    let var_b1: f64 = markets
        .iter()
        .map(|(_, m)| {
            let b = *m.path().values().last().unwrap();
            (b - mean_b1) * (b - mean_b1)
        })
        .sum::<f64>()
        / n;
    report.aggregates = vec![
        ("mean_terminal_b".to_string(), mean_b1),
        ("var_terminal_b".to_string(), var_b1),
    ];
    for (i, m) in &markets {
        report.records.push(PathRecord {
            index: *i,
            seed: derive_seed(cfg.master_seed, *i),
            resolved: true,
            terminal: *m.path().values().last().unwrap(),
            target: 0.0,
        });
    }

    let refs: Vec<(u64, &MarketPath)> = markets.iter().map(|(i, m)| (*i, m)).collect();
    let csv = paths_csv(&refs);
    let f1 = write_file(&cfg.output_dir, "paths.csv", &csv)?;
    let f2 = write_file(&cfg.output_dir, "report.txt", &report.render())?;
    Ok(RunOutput { report, files: vec![f1, f2] })
}

// ---------------------------------------------------------------- ito-check

fn ito_check(cfg: &Config) -> RResult<RunOutput> {
    let h = cfg.hurst_param().map_err(cfg_err)?;
    let alpha = cfg.alpha_param().map_err(cfg_err)?;
    if cfg.grid_size < 64 {
        return Err(RunError::Config("grid_size outside [64, inf) for ito-check".into()));
    }
    let sizes = [cfg.grid_size / 4, cfg.grid_size / 2, cfg.grid_size];
    let threshold = if cfg.grid_size >= 8192 { 0.01 } else { 0.05 };
    let verdicts =
        ito_residual_suite(h, alpha, &sizes, cfg.n_paths, cfg.master_seed, threshold)
            .map_err(run_err)?;

    let mut report = ExperimentReport::new("ito-check");
    report.config_echo = cfg.echo();
    report.verdicts = verdicts;
    let f = write_file(&cfg.output_dir, "report.txt", &report.render())?;
    Ok(RunOutput { report, files: vec![f] })
}

// ---------------------------------------------------------------- diverge

fn diverge(cfg: &Config) -> RResult<RunOutput> {
    let part = BlockPartition::new(cfg.gamma, cfg.n_max, cfg.points_per_block).map_err(cfg_err)?;
    let grid = construction_grid(cfg, &part)?;
    let sampler = sampler_for(cfg, grid)?;
    let params = DivergentParams::new(part.clone(), cfg.beta);
    let n_max = part.n_max();

    struct PathOut {
        v_quarter: f64,
        v_half: f64,
        v_full: f64,
        triggered_tail: usize,
        blocks_tail: usize,
    }
    let outs: Vec<(u64, PathOut)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(cfg.master_seed, i));
            let profile = divergence_profile(&p, &params).expect("validated params");
            let (_, records) = build_divergent_integrand(&p, &params).expect("validated params");
            let lo_tail = n_max / 2;
            let triggered_tail = records
                .iter()
                .filter(|r| r.block > lo_tail && r.triggered)
                .count();
            let blocks_tail = records.iter().filter(|r| r.block > lo_tail).count();
            (
                i,
                PathOut {
                    v_quarter: profile[n_max / 4].1,
                    v_half: profile[n_max / 2].1,
                    v_full: profile[n_max].1,
                    triggered_tail,
                    blocks_tail,
                },
            )
        })
        .collect();

    let mut report = ExperimentReport::new("diverge");
    report.config_echo = cfg.echo();
    let mut q: Vec<f64> = outs.iter().map(|(_, o)| o.v_quarter).collect();
    let mut hh: Vec<f64> = outs.iter().map(|(_, o)| o.v_half).collect();
    let mut fl: Vec<f64> = outs.iter().map(|(_, o)| o.v_full).collect();
    let med_q = median(&mut q);
    let med_h = median(&mut hh);
    let med_f = median(&mut fl);
    let trig: usize = outs.iter().map(|(_, o)| o.triggered_tail).sum();
    let blocks: usize = outs.iter().map(|(_, o)| o.blocks_tail).sum();
    let frac = trig as f64 / blocks.max(1) as f64;
    report.aggregates = vec![
        (format!("median_v_at_block_{}", n_max / 4), med_q),
        (format!("median_v_at_block_{}", n_max / 2), med_h),
        (format!("median_v_at_block_{n_max}"), med_f),
        ("triggered_fraction_tail_half".to_string(), frac),
    ];
    report.verdicts.push(TestVerdict {
        name: "divergence_profile_increasing".to_string(),
        statistic: (med_h - med_q).min(med_f - med_h),
        threshold: 0.0,
        passed: med_q < med_h && med_h < med_f,
        n_samples: cfg.n_paths,
        notes: format!(
            "medians at blocks {}/{}/{}: {med_q:.4}/{med_h:.4}/{med_f:.4}; statistic > threshold required",
            n_max / 4,
            n_max / 2,
            n_max
        ),
    });
    for (i, o) in &outs {
        report.records.push(PathRecord {
            index: *i,
            seed: derive_seed(cfg.master_seed, *i),
            resolved: true,
            terminal: o.v_full,
            target: 0.0,
        });
    }
    let f1 = write_file(&cfg.output_dir, "terminals.csv", &terminals_csv(&report.records))?;
    let f2 = write_file(&cfg.output_dir, "report.txt", &report.render())?;
    Ok(RunOutput { report, files: vec![f1, f2] })
}

// ------------------------------------------------- represent-distribution

fn represent_distribution(cfg: &Config) -> RResult<RunOutput> {
    let target = cfg.target().map_err(cfg_err)?;
    let rule_cap =
        BlockPartition::max_blocks_for_step(cfg.gamma, 0.5, 1.0 / cfg.grid_size as f64);
    let n_max = cfg.n_max.min(rule_cap.max(2));
    let part = BlockPartition::rebased(cfg.gamma, n_max, cfg.points_per_block, 0.5, 1.0)
        .map_err(cfg_err)?;
    let grid = construction_grid(cfg, &part)?;
    let sampler = sampler_for(cfg, grid)?;
    let params = DivergentParams::new(part, cfg.beta);
    let quantile = {
        let t = target.clone();
        move |p: f64| t.quantile(p)
    };

    let rows: Vec<(u64, bool, f64, f64)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(cfg.master_seed, i));
            let out = prescribed_distribution_integrand(&p, &quantile, &params)
                .expect("validated params");
            (i, out.resolved, out.terminal, out.target_value)
        })
        .collect();

    let mut report = ExperimentReport::new("represent-distribution");
    report.config_echo = cfg.echo();
    for (i, resolved, terminal, target_v) in &rows {
        report.records.push(PathRecord {
            index: *i,
            seed: derive_seed(cfg.master_seed, *i),
            resolved: *resolved,
            terminal: *terminal,
            target: *target_v,
        });
    }
    let resolved_terminals: Vec<f64> = rows
        .iter()
        .filter(|r| r.1)
        .map(|r| r.2)
        .collect();
    let resolved_fraction = resolved_terminals.len() as f64 / rows.len() as f64;
    let ks = if resolved_terminals.is_empty() {
        f64::NAN
    } else {
        ks_statistic(&resolved_terminals, |x| target.cdf(x)).map_err(run_err)?
    };
    report.aggregates = vec![
        ("resolved_fraction".to_string(), resolved_fraction),
        ("ks_on_resolved".to_string(), ks),
    ];
    report.verdicts.push(TestVerdict {
        name: "resolved_fraction".to_string(),
        statistic: resolved_fraction,
        threshold: 0.99,
        passed: resolved_fraction >= 0.99,
        n_samples: rows.len(),
        notes: "statistic >= threshold required".to_string(),
    });
    report.verdicts.push(TestVerdict {
        name: format!("ks_resolved_vs_{}", target.label()),
        statistic: ks,
        threshold: 0.05,
        passed: ks.is_finite() && ks < 0.05,
        n_samples: resolved_terminals.len(),
        notes: "statistic < threshold required; resolved subset only".to_string(),
    });

    let f1 = write_file(&cfg.output_dir, "terminals.csv", &terminals_csv(&report.records))?;
    let f2 = write_file(&cfg.output_dir, "report.txt", &report.render())?;
    Ok(RunOutput { report, files: vec![f1, f2] })
}

// ---------------------------------------------------- represent-improper

fn represent_improper(cfg: &Config) -> RResult<RunOutput> {
    let claim = cfg.claim().map_err(cfg_err)?;
    let part = BlockPartition::new(cfg.gamma, cfg.n_max, cfg.points_per_block).map_err(cfg_err)?;
    let grid = construction_grid(cfg, &part)?;
    let sampler = sampler_for(cfg, grid)?;
    probe_claim(&claim, &sampler, derive_seed(cfg.master_seed, 0))?;
    let params = DivergentParams::new(part, cfg.beta);

    let rows: Vec<(u64, f64, f64)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(cfg.master_seed, i));
            // the claim's adapted process evaluated at the prefix end; the
            // prefix length pins the cut, so only revealed values are read
            let approx: &Approximator = &|_n, _t_n, _g, vals| {
                claim_value_at_index(&claim, &p, vals.len() - 1).expect("claim evaluation")
            };
            let out = improper_representation(&p, approx, &params).expect("validated params");
            let x_end = *out.trajectory.last().unwrap();
            let payoff = claim_value_at_index(&claim, &p, p.len() - 1).expect("claim evaluation");
            (i, x_end, payoff)
        })
        .collect();

    let mut report = ExperimentReport::new("represent-improper");
    report.config_echo = cfg.echo();
    let mut errs: Vec<f64> = rows.iter().map(|(_, x, t)| (x - t).abs()).collect();
    let med = median(&mut errs);
    report.aggregates = vec![("median_terminal_gap".to_string(), med)];
    report.verdicts.push(TestVerdict {
        name: "improper_terminal_tracking".to_string(),
        statistic: med,
        threshold: 0.05,
        passed: med < 0.05,
        n_samples: rows.len(),
        notes: "statistic < threshold required; |x_end - payoff| median".to_string(),
    });
    for (i, x, t) in &rows {
        report.records.push(PathRecord {
            index: *i,
            seed: derive_seed(cfg.master_seed, *i),
            resolved: true,
            terminal: *x,
            target: *t,
        });
    }
    let f1 = write_file(&cfg.output_dir, "terminals.csv", &terminals_csv(&report.records))?;
    let f2 = write_file(&cfg.output_dir, "report.txt", &report.render())?;
    Ok(RunOutput { report, files: vec![f1, f2] })
}

// ------------------------------------------------------------- replicate

fn replicate(cfg: &Config) -> RResult<RunOutput> {
    let h = cfg.hurst_param().map_err(cfg_err)?;
    let claim = cfg.claim().map_err(cfg_err)?;
    let rp = choose_replication_params(h, cfg.holder_a_value()).map_err(cfg_err)?;
    let part =
        BlockPartition::new(rp.gamma, cfg.n_max, cfg.points_per_block).map_err(cfg_err)?;
    let grid = construction_grid(cfg, &part)?;
    let sampler = sampler_for(cfg, grid)?;
    probe_claim(&claim, &sampler, derive_seed(cfg.master_seed, 0))?;
    let n_max = part.n_max();

    let rows: Vec<(u64, bool, f64, f64, usize, usize)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(cfg.master_seed, i));
            let out = replicate_holder_claim(&p, &claim, &rp, &part).expect("validated params");
            let payoff = claim_value_at_index(&claim, &p, p.len() - 1).expect("claim evaluation");
            let tail_lo = n_max / 2;
            let case_b_tail = out
                .records
                .iter()
                .filter(|r| r.block > tail_lo && r.case_label == CaseLabel::B)
                .count();
            let tail_blocks = out.records.iter().filter(|r| r.block > tail_lo).count();
            (i, out.resolved, out.terminal, payoff, case_b_tail, tail_blocks)
        })
        .collect();

    let mut report = ExperimentReport::new("replicate");
    report.config_echo = cfg.echo();
    let mut rel: Vec<f64> = rows
        .iter()
        .map(|(_, _, term, pay, _, _)| (term - pay).abs() / (1.0 + pay.abs()))
        .collect();
    let med = median(&mut rel);
    let resolved_fraction =
        rows.iter().filter(|r| r.1).count() as f64 / rows.len() as f64;
    let case_b: usize = rows.iter().map(|r| r.4).sum();
    let tail: usize = rows.iter().map(|r| r.5).sum();
    report.aggregates = vec![
        ("median_relative_error".to_string(), med),
        ("resolved_fraction".to_string(), resolved_fraction),
        (
            "case_b_fraction_tail_half".to_string(),
            case_b as f64 / tail.max(1) as f64,
        ),
    ];
    report.verdicts.push(TestVerdict {
        name: "replication_median_error".to_string(),
        statistic: med,
        threshold: 0.05,
        passed: med < 0.05,
        n_samples: rows.len(),
        notes: "statistic < threshold required".to_string(),
    });
    for (i, resolved, term, pay, _, _) in &rows {
        report.records.push(PathRecord {
            index: *i,
            seed: derive_seed(cfg.master_seed, *i),
            resolved: *resolved,
            terminal: *term,
            target: *pay,
        });
    }
    let f1 = write_file(&cfg.output_dir, "terminals.csv", &terminals_csv(&report.records))?;
    let f2 = write_file(&cfg.output_dir, "report.txt", &report.render())?;
    Ok(RunOutput { report, files: vec![f1, f2] })
}

// ------------------------------------------------------------- arbitrage

fn arbitrage(cfg: &Config) -> RResult<RunOutput> {
    let mp = cfg.market_params().map_err(cfg_err)?;
    let alpha = cfg.alpha_param().map_err(cfg_err)?;
    let rule_cap =
        BlockPartition::max_blocks_for_step(cfg.gamma, 0.5, 1.0 / cfg.grid_size as f64);
    let n_max = cfg.n_max.min(rule_cap.max(2));
    let part = BlockPartition::rebased(cfg.gamma, n_max, cfg.points_per_block, 0.5, 1.0)
        .map_err(cfg_err)?;
    let grid = construction_grid(cfg, &part)?;
    let sampler = sampler_for(cfg, grid)?;
    let params = DivergentParams::new(part, cfg.beta);
    let c = cfg.arbitrage_c;

    struct Row {
        index: u64,
        resolved: bool,
        v0: f64,
        v1: f64,
    }
    let mut first_ledger = None;
    let rows: Vec<Row> = {
        let outs: Vec<(u64, fbmlab::market::SteeredOutcome, MarketPath)> = (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let p = sampler.sample(derive_seed(cfg.master_seed, i));
                let m = simulate_market(&p, &mp).expect("validated params");
                let out =
                    strong_arbitrage_strategy(&m, c, &params, alpha).expect("validated params");
                (i, out, m)
            })
            .collect();
        let mut rows = Vec::with_capacity(outs.len());
        for (i, out, m) in outs {
            if i == 0 {
                first_ledger = Some((m, out.ledger.clone()));
            }
            rows.push(Row {
                index: i,
                resolved: out.resolved,
                v0: out.ledger.value[0],
                v1: *out.ledger.value.last().unwrap(),
            });
        }
        rows
    };

    let mut report = ExperimentReport::new("arbitrage");
    report.config_echo = cfg.echo();
    let resolved_fraction = rows.iter().filter(|r| r.resolved).count() as f64 / rows.len() as f64;
    let max_abs_v0 = rows.iter().map(|r| r.v0.abs()).fold(0.0f64, f64::max);
    let min_v1_resolved = rows
        .iter()
        .filter(|r| r.resolved)
        .map(|r| r.v1)
        .fold(f64::INFINITY, f64::min);
    report.aggregates = vec![
        ("resolved_fraction".to_string(), resolved_fraction),
        ("max_abs_v0".to_string(), max_abs_v0),
        ("min_v1_on_resolved".to_string(), min_v1_resolved),
    ];
    report.verdicts.push(TestVerdict {
        name: "arbitrage_zero_start".to_string(),
        statistic: max_abs_v0,
        threshold: 0.0,
        passed: max_abs_v0 == 0.0,
        n_samples: rows.len(),
        notes: "statistic <= threshold required; V_0 identically zero".to_string(),
    });
    report.verdicts.push(TestVerdict {
        name: "arbitrage_floor_on_resolved".to_string(),
        statistic: min_v1_resolved,
        threshold: c,
        passed: min_v1_resolved >= c - 1e-9,
        n_samples: rows.len(),
        notes: "statistic >= threshold required".to_string(),
    });
    report.verdicts.push(TestVerdict {
        name: "arbitrage_resolved_fraction".to_string(),
        statistic: resolved_fraction,
        threshold: 0.99,
        passed: resolved_fraction >= 0.99,
        n_samples: rows.len(),
        notes: "statistic >= threshold required".to_string(),
    });
    for r in &rows {
        report.records.push(PathRecord {
            index: r.index,
            seed: derive_seed(cfg.master_seed, r.index),
            resolved: r.resolved,
            terminal: r.v1,
            target: c,
        });
    }

    let mut files = Vec::new();
    if let Some((m, ledger)) = &first_ledger {
        let csv = ledger_csv(&[(0, m, ledger)]);
        files.push(write_file(&cfg.output_dir, "ledger.csv", &csv)?);
        files.push(write_file(&cfg.output_dir, "paths.csv", &paths_csv(&[(0, m)]))?);
    }
    files.push(write_file(&cfg.output_dir, "terminals.csv", &terminals_csv(&report.records))?);
    files.push(write_file(&cfg.output_dir, "report.txt", &report.render())?);
    Ok(RunOutput { report, files })
}

// ------------------------------------------------------------ hedge-weak

fn hedge_weak(cfg: &Config) -> RResult<RunOutput> {
    let mp = cfg.market_params().map_err(cfg_err)?;
    let alpha = cfg.alpha_param().map_err(cfg_err)?;
    let claim = cfg.claim().map_err(cfg_err)?;
    let part = BlockPartition::new(cfg.gamma, cfg.n_max, cfg.points_per_block).map_err(cfg_err)?;
    let grid = construction_grid(cfg, &part)?;
    let sampler = sampler_for(cfg, grid)?;
    probe_claim(&claim, &sampler, derive_seed(cfg.master_seed, 0))?;
    let params = DivergentParams::new(part, cfg.beta);

    let rows: Vec<(u64, f64, f64)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(cfg.master_seed, i));
            let m = simulate_market(&p, &mp).expect("validated params");
            let out = weak_hedge(&m, &claim, cfg.v0, &params, alpha).expect("validated params");
            let v_end = *out.value_at_boundaries.last().unwrap();
            (i, v_end, out.payoff)
        })
        .collect();

    let mut report = ExperimentReport::new("hedge-weak");
    report.config_echo = cfg.echo();
    let mut errs: Vec<f64> = rows.iter().map(|(_, v, p)| (v - p).abs()).collect();
    let med = median(&mut errs);
    report.aggregates = vec![("median_terminal_gap".to_string(), med)];
    report.verdicts.push(TestVerdict {
        name: "weak_hedge_tracking".to_string(),
        statistic: med,
        threshold: 0.05,
        passed: med < 0.05,
        n_samples: rows.len(),
        notes: format!("statistic < threshold required; v0 = {}", cfg.v0),
    });
    for (i, v, p) in &rows {
        report.records.push(PathRecord {
            index: *i,
            seed: derive_seed(cfg.master_seed, *i),
            resolved: true,
            terminal: *v,
            target: *p,
        });
    }
    let f1 = write_file(&cfg.output_dir, "terminals.csv", &terminals_csv(&report.records))?;
    let f2 = write_file(&cfg.output_dir, "report.txt", &report.render())?;
    Ok(RunOutput { report, files: vec![f1, f2] })
}

// ---------------------------------------------------------- hedge-holder

fn hedge_holder(cfg: &Config) -> RResult<RunOutput> {
    let h = cfg.hurst_param().map_err(cfg_err)?;
    let mp = cfg.market_params().map_err(cfg_err)?;
    let claim = cfg.claim().map_err(cfg_err)?;
    let rp = choose_replication_params(h, cfg.holder_a_value()).map_err(cfg_err)?;
    let part =
        BlockPartition::new(rp.gamma, cfg.n_max, cfg.points_per_block).map_err(cfg_err)?;
    let grid = construction_grid(cfg, &part)?;
    let sampler = sampler_for(cfg, grid)?;
    probe_claim(&claim, &sampler, derive_seed(cfg.master_seed, 0))?;

    let mut first_ledger = None;
    let outs: Vec<(u64, fbmlab::market::HolderHedgeOutcome, MarketPath)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(derive_seed(cfg.master_seed, i));
            let m = simulate_market(&p, &mp).expect("validated params");
            let out = holder_hedge(&m, &claim, cfg.v0, &rp, &part).expect("validated params");
            (i, out, m)
        })
        .collect();

    let mut report = ExperimentReport::new("hedge-holder");
    report.config_echo = cfg.echo();
    let mut rel: Vec<f64> = outs
        .iter()
        .map(|(_, o, _)| (o.terminal_value - o.payoff).abs() / (1.0 + o.payoff.abs()))
        .collect();
    let med = median(&mut rel);
    let resolved_fraction =
        outs.iter().filter(|(_, o, _)| o.resolved).count() as f64 / outs.len() as f64;
    let worst_resolved_gap = outs
        .iter()
        .filter(|(_, o, _)| o.resolved)
        .map(|(_, o, _)| (o.terminal_value - o.payoff).abs() / (1.0 + o.payoff.abs()))
        .fold(0.0f64, f64::max);
    let flips: usize = outs.iter().map(|(_, o, _)| o.drift_trigger_flips).sum();
    let blocks_total: usize = outs.iter().map(|(_, o, _)| o.records.len()).sum();
    report.aggregates = vec![
        ("median_relative_error".to_string(), med),
        ("resolved_fraction".to_string(), resolved_fraction),
        ("worst_resolved_relative_gap".to_string(), worst_resolved_gap),
        (
            "drift_trigger_flip_fraction".to_string(),
            flips as f64 / blocks_total.max(1) as f64,
        ),
    ];
    report.verdicts.push(TestVerdict {
        name: "holder_hedge_exact_on_resolved".to_string(),
        statistic: worst_resolved_gap,
        threshold: 1e-9,
        passed: worst_resolved_gap < 1e-9,
        n_samples: outs.len(),
        notes: "statistic < threshold required; resolved paths land on the payoff".to_string(),
    });
    for (i, o, m) in &outs {
        if *i == 0 {
            first_ledger = Some((m.clone(), o.ledger.clone()));
        }
        report.records.push(PathRecord {
            index: *i,
            seed: derive_seed(cfg.master_seed, *i),
            resolved: o.resolved,
            terminal: o.terminal_value,
            target: o.payoff,
        });
    }
    let mut files = Vec::new();
    if let Some((m, ledger)) = &first_ledger {
        files.push(write_file(&cfg.output_dir, "ledger.csv", &ledger_csv(&[(0, m, ledger)]))?);
    }
    files.push(write_file(&cfg.output_dir, "terminals.csv", &terminals_csv(&report.records))?);
    files.push(write_file(&cfg.output_dir, "report.txt", &report.render())?);
    Ok(RunOutput { report, files })
}

// ----------------------------------------------------- verify subcommands

fn verify_small_ball(cfg: &Config) -> RResult<RunOutput> {
    let h = cfg.hurst_param().map_err(cfg_err)?;
    let eps: Vec<f64> = (1..=6).map(|i| 0.05 * i as f64).collect();
    let n = cfg.n_paths.max(10_000);
    let out = small_ball_check(h, 1.0, &eps, n, 1024, cfg.master_seed).map_err(run_err)?;
    let mut report = ExperimentReport::new("verify-small-ball");
    report.config_echo = cfg.echo();
    report.aggregates = out
        .per_eps
        .iter()
        .map(|p| (format!("p_hat_eps_{:.2}", p.eps), p.p_hat))
        .collect();
    report.aggregates.push(("c_hat".to_string(), out.c_hat));
    report.verdicts.push(out.verdict);
    let f = write_file(&cfg.output_dir, "report.txt", &report.render())?;
    Ok(RunOutput { report, files: vec![f] })
}

fn verify_sign_lemma(cfg: &Config) -> RResult<RunOutput> {
    let h = cfg.hurst_param().map_err(cfg_err)?;
    let n = cfg.n_paths.max(10_000);
    let out = sign_change_bound_check(h, 20, n, cfg.master_seed).map_err(run_err)?;
    let mut report = ExperimentReport::new("verify-sign-lemma");
    report.config_echo = cfg.echo();
    report.aggregates = vec![
        ("c_hat".to_string(), out.c_hat),
        ("c_hat_refined".to_string(), out.c_hat_refined),
        ("mc_max_z".to_string(), out.mc_max_z),
    ];
    report.verdicts.push(out.verdict);
    let f = write_file(&cfg.output_dir, "report.txt", &report.render())?;
    Ok(RunOutput { report, files: vec![f] })
}

fn verify_all(cfg: &Config) -> RResult<RunOutput> {
    let h = cfg.hurst_param().map_err(cfg_err)?;
    let alpha = cfg.alpha_param().map_err(cfg_err)?;
    let mut report = ExperimentReport::new("verify-all");
    report.config_echo = cfg.echo();

    report.verdicts.push(
        covariance_fidelity_check(h, 16, 2000, derive_seed(cfg.master_seed, 1), 4.0)
            .map_err(run_err)?,
    );
    report.verdicts.extend(
        ito_residual_suite(h, alpha, &[256, 512], 20, derive_seed(cfg.master_seed, 2), 0.05)
            .map_err(run_err)?,
    );
    let sign = sign_change_bound_check(h, 12, 4000, cfg.master_seed).map_err(run_err)?;
    report.verdicts.push(sign.verdict);
    let eps: Vec<f64> = (2..=6).map(|i| 0.05 * i as f64).collect();
    let sb = small_ball_check(h, 1.0, &eps, 2000, 512, derive_seed(cfg.master_seed, 3))
        .map_err(run_err)?;
    report.verdicts.push(sb.verdict);

    // small divergence-profile check; gamma sized to the configured H
    {
        let gamma = if cfg.hurst < 0.83 { 1.2 } else { 0.5 * (1.0 + 1.0 / cfg.hurst) };
        let part = BlockPartition::new(gamma, 40, 16).map_err(cfg_err)?;
        let grid = TimeGrid::uniform(512)
            .map_err(run_err)?
            .merged_with(&part.subgrid_points_for_step(1.0 / 512.0))
            .map_err(run_err)?;
        let sampler = FbmSampler::new(grid, h).map_err(run_err)?;
        let params = DivergentParams::new(part, (1.0 / (gamma * cfg.hurst) - 1.0) * 0.5);
        let vs: Vec<(f64, f64, f64)> = (0..50u64)
            .into_par_iter()
            .map(|i| {
                let p = sampler.sample(derive_seed(cfg.master_seed, 1000 + i));
                let profile = divergence_profile(&p, &params).expect("validated params");
                (profile[10].1, profile[20].1, profile[40].1)
            })
            .collect();
        let mut v10: Vec<f64> = vs.iter().map(|v| v.0).collect();
        let mut v20: Vec<f64> = vs.iter().map(|v| v.1).collect();
        let mut v40: Vec<f64> = vs.iter().map(|v| v.2).collect();
        let (a, b, c) = (median(&mut v10), median(&mut v20), median(&mut v40));
        report.verdicts.push(TestVerdict {
            name: "divergence_profile_increasing".to_string(),
            statistic: (b - a).min(c - b),
            threshold: 0.0,
            passed: a < b && b < c,
            n_samples: 50,
            notes: format!("medians {a:.4}/{b:.4}/{c:.4}; statistic > threshold required"),
        });
    }

    let f = write_file(&cfg.output_dir, "report.txt", &report.render())?;
    Ok(RunOutput { report, files: vec![f] })
}
