use fbmlab_cli::config::Config;
use fbmlab_cli::runner::{run, RunError, SUBCOMMANDS};
use std::process::ExitCode;

const USAGE: &str = "usage: fbmlab <subcommand> [--config PATH] [--seed U64] [--paths N] [--grid N] [--out DIR] [--quiet]

subcommands:
  generate                 draw paths and export them as CSV
  ito-check                chain-rule residual sweep for the pathwise integral
  diverge                  divergent-integrand profile diagnostics
  represent-distribution   steer the terminal integral to a target law
  represent-improper       drive the running integral to a claim payoff
  replicate                replicate a Holder claim by stopping times
  arbitrage                zero-cost strategy with a positive terminal floor
  hedge-weak               weak hedge of a claim at arbitrary cost
  hedge-holder             drift-corrected hedge of a Holder claim
  verify-small-ball        exponential small-ball bound fit
  verify-sign-lemma        sign-change probability oracle vs Monte Carlo
  verify-all               the default verification battery

exit status: 0 if every enabled verdict passed, 1 on runtime error or failed
verdicts, 2 on configuration errors.";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match cli(args) {
        Ok(all_passed) => {
            if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(RunError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(RunError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn cli(args: Vec<String>) -> Result<bool, RunError> {
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        println!("{USAGE}");
        return if args.is_empty() {
            Err(RunError::Config("missing subcommand".into()))
        } else {
            Ok(true)
        };
    }
    let sub = args[0].clone();
    if !SUBCOMMANDS.contains(&sub.as_str()) {
        return Err(RunError::Config(format!(
            "unknown subcommand '{sub}' (expected one of {SUBCOMMANDS:?})"
        )));
    }

    let mut cfg = Config::default();
    let mut quiet = false;
    let mut i = 1;
    let mut pending: Vec<(String, String)> = Vec::new();
    while i < args.len() {
        let flag = args[i].as_str();
        let mut take_value = |name: &str| -> Result<String, RunError> {
            i += 1;
            args.get(i)
                .cloned()
                .ok_or_else(|| RunError::Config(format!("{name} needs a value")))
        };
        match flag {
            "--config" => {
                let path = take_value("--config")?;
                cfg = Config::from_file(std::path::Path::new(&path))
                    .map_err(|e| RunError::Config(e.to_string()))?;
            }
            "--seed" => {
                let v = take_value("--seed")?;
                pending.push(("seed".into(), v));
            }
            "--paths" => {
                let v = take_value("--paths")?;
                pending.push(("paths".into(), v));
            }
            "--grid" => {
                let v = take_value("--grid")?;
                pending.push(("grid".into(), v));
            }
            "--out" => {
                let v = take_value("--out")?;
                pending.push(("out".into(), v));
            }
            "--quiet" => quiet = true,
            other => {
                return Err(RunError::Config(format!("unknown flag '{other}'")));
            }
        }
        i += 1;
    }
    cfg.apply_env().map_err(|e| RunError::Config(e.to_string()))?;
    for (key, v) in pending {
        match key.as_str() {
            "seed" => {
                cfg.master_seed = v
                    .parse()
                    .map_err(|_| RunError::Config(format!("--seed: expected u64, got '{v}'")))?
            }
            "paths" => {
                cfg.n_paths = v
                    .parse()
                    .map_err(|_| RunError::Config(format!("--paths: expected integer, got '{v}'")))?
            }
            "grid" => {
                cfg.grid_size = v
                    .parse()
                    .map_err(|_| RunError::Config(format!("--grid: expected integer, got '{v}'")))?
            }
            "out" => cfg.output_dir = v.into(),
            _ => unreachable!(),
        }
    }
    cfg.quiet = quiet;
    cfg.validate().map_err(|e| RunError::Config(e.to_string()))?;

    let started = std::time::Instant::now();
    let out = run(&sub, &cfg)?;
    let elapsed = started.elapsed().as_secs_f64();

    if !quiet {
        for v in &out.report.verdicts {
            println!(
                "[{}] {}: statistic = {:.6e}, threshold = {:.6e} ({})",
                if v.passed { "pass" } else { "FAIL" },
                v.name,
                v.statistic,
                v.threshold,
                v.notes
            );
        }
        for (k, v) in &out.report.aggregates {
            println!("{k} = {v:.6e}");
        }
        for f in &out.files {
            println!("wrote {}", f.display());
        }
        eprintln!("elapsed: {elapsed:.2} s");
    }
    Ok(out.report.all_passed())
}
