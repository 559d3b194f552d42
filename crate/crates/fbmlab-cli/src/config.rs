//! Flat `key = value` experiment configuration with strict key checking.
//!
//! Unknown keys are rejected so typos fail loudly; every parameter window
//! is validated at load with the same checkers the constructions use, and
//! violations name the offending window. Only the master seed and output
//! directory may be overridden from the environment (FBMLAB_SEED,
//! FBMLAB_OUT); everything else comes from the file or the command line.

use fbmlab::claims::{ClaimKind, ClaimSpec, IndicatorEvent, MarkPayoff, SupPayoff};
use fbmlab::constructions::TargetDistribution;
use fbmlab::grid::{AlphaParam, HurstParam};
use fbmlab::market::{MarketParams, RateSpec};
use std::path::PathBuf;

#[derive(Debug, Clone)]
pub struct Config {
    pub hurst: f64,
    pub grid_size: usize,
    pub master_seed: u64,
    pub n_paths: usize,
    /// fractional order; defaults to the interior-of-window rule when unset
    pub alpha: Option<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub n_max: usize,
    pub points_per_block: usize,
    pub market_s0: f64,
    pub market_mu: f64,
    pub market_sigma: f64,
    pub market_rate_spec: String,
    pub market_r_max: f64,
    pub claim_spec: String,
    pub target_distribution_spec: String,
    /// Holder exponent of the claim process; defaults to 0.6 H
    pub holder_a: Option<f64>,
    pub v0: f64,
    pub arbitrage_c: f64,
    pub output_dir: PathBuf,
    pub quiet: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            hurst: 0.7,
            grid_size: 1024,
            master_seed: 42,
            n_paths: 100,
            alpha: None,
            gamma: 1.2,
            beta: 0.1,
            n_max: 200,
            points_per_block: 32,
            market_s0: 1.0,
            market_mu: 0.05,
            market_sigma: 3.0,
            market_rate_spec: "constant:0.01".to_string(),
            market_r_max: 0.015,
            claim_spec: "square_of_mark:0.5".to_string(),
            target_distribution_spec: "exponential:1.0".to_string(),
            holder_a: None,
            v0: 0.0,
            arbitrage_c: 1.0,
            output_dir: PathBuf::from("fbmlab-out"),
            quiet: false,
        }
    }
}

/// Configuration failure; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl Config {
    pub fn from_file(path: &std::path::Path) -> CResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_str_content(&text)
    }

    pub fn from_str_content(text: &str) -> CResult<Self> {
        let mut cfg = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value)
                .map_err(|e| bad(format!("line {}: {}", lineno + 1, e.0)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> CResult<()> {
        fn f(v: &str, key: &str) -> CResult<f64> {
            v.parse()
                .map_err(|_| bad(format!("key {key}: expected a number, got '{v}'")))
        }
        fn u(v: &str, key: &str) -> CResult<usize> {
            v.parse()
                .map_err(|_| bad(format!("key {key}: expected an integer, got '{v}'")))
        }
        match key {
            "hurst" => self.hurst = f(value, key)?,
            "grid_size" => self.grid_size = u(value, key)?,
            "master_seed" => {
                self.master_seed = value
                    .parse()
                    .map_err(|_| bad(format!("key master_seed: expected u64, got '{value}'")))?
            }
            "n_paths" => self.n_paths = u(value, key)?,
            "alpha" => self.alpha = Some(f(value, key)?),
            "gamma" => self.gamma = f(value, key)?,
            "beta" => self.beta = f(value, key)?,
            "n_max" => self.n_max = u(value, key)?,
            "points_per_block" => self.points_per_block = u(value, key)?,
            "market.s0" => self.market_s0 = f(value, key)?,
            "market.mu" => self.market_mu = f(value, key)?,
            "market.sigma" => self.market_sigma = f(value, key)?,
            "market.rate_spec" => self.market_rate_spec = value.to_string(),
            "market.r_max" => self.market_r_max = f(value, key)?,
            "claim_spec" => self.claim_spec = value.to_string(),
            "target_distribution_spec" => self.target_distribution_spec = value.to_string(),
            "holder_a" => self.holder_a = Some(f(value, key)?),
            "v0" => self.v0 = f(value, key)?,
            "arbitrage_c" => self.arbitrage_c = f(value, key)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(bad(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Environment overrides for the seed and output directory only.
    pub fn apply_env(&mut self) -> CResult<()> {
        if let Ok(seed) = std::env::var("FBMLAB_SEED") {
            self.master_seed = seed
                .parse()
                .map_err(|_| bad(format!("FBMLAB_SEED: expected u64, got '{seed}'")))?;
        }
        if let Ok(out) = std::env::var("FBMLAB_OUT") {
            self.output_dir = PathBuf::from(out);
        }
        Ok(())
    }

    /// Window checks shared with the constructions; errors name the window.
    pub fn validate(&self) -> CResult<()> {
        let h = self.hurst_param()?;
        if self.grid_size < 8 {
            return Err(bad("grid_size outside [8, inf)"));
        }
        if self.grid_size % 2 != 0 {
            return Err(bad("grid_size must be even so that 1/2 is a grid point"));
        }
        if self.n_paths == 0 {
            return Err(bad("n_paths outside [1, inf)"));
        }
        if self.n_max == 0 {
            return Err(bad("n_max outside [1, inf)"));
        }
        if self.points_per_block < 4 {
            return Err(bad("points_per_block outside [4, inf)"));
        }
        if let Some(a) = self.alpha {
            AlphaParam::new(a)
                .and_then(|ap| ap.check_against(h))
                .map_err(|e| bad(e.to_string()))?;
        }
        // divergent-construction windows (the constructions re-check at use)
        if !(self.gamma > 1.0 && self.gamma < 1.0 / self.hurst) {
            return Err(bad(format!(
                "gamma outside (1, 1/H): gamma = {}, H = {}",
                self.gamma, self.hurst
            )));
        }
        let beta_max = 1.0 / (self.gamma * self.hurst) - 1.0;
        if !(self.beta > 0.0 && self.beta < beta_max) {
            return Err(bad(format!(
                "beta outside (0, 1/(gamma*H)-1): beta = {}, bound = {beta_max}",
                self.beta
            )));
        }
        if let Some(a) = self.holder_a {
            if !(a > 0.0) {
                return Err(bad("holder_a outside (0, inf)"));
            }
        }
        if !(self.arbitrage_c > 0.0) {
            return Err(bad("arbitrage_c outside (0, inf)"));
        }
        self.market_params().map(|_| ())?;
        self.target().map(|_| ())?;
        self.claim().map(|_| ())?;
        Ok(())
    }

    pub fn hurst_param(&self) -> CResult<HurstParam> {
        HurstParam::new(self.hurst).map_err(|e| bad(e.to_string()))
    }

    pub fn alpha_param(&self) -> CResult<AlphaParam> {
        let h = self.hurst_param()?;
        match self.alpha {
            Some(a) => AlphaParam::new(a)
                .and_then(|ap| ap.check_against(h))
                .map_err(|e| bad(e.to_string())),
            None => AlphaParam::default_for(h).map_err(|e| bad(e.to_string())),
        }
    }

    pub fn holder_a_value(&self) -> f64 {
        self.holder_a.unwrap_or(0.6 * self.hurst)
    }

    pub fn market_params(&self) -> CResult<MarketParams> {
        let rate = parse_rate_spec(&self.market_rate_spec)?;
        let p = MarketParams {
            s0: self.market_s0,
            mu: self.market_mu,
            sigma: self.market_sigma,
            rate,
            r_max: self.market_r_max,
        };
        // boundedness asserted on a dense probe grid at load time
        let probe: Vec<f64> = (0..=256).map(|i| i as f64 / 256.0).collect();
        p.validate(&probe).map_err(|e| bad(e.to_string()))?;
        Ok(p)
    }

    pub fn target(&self) -> CResult<TargetDistribution> {
        parse_target_spec(&self.target_distribution_spec)
    }

    pub fn claim(&self) -> CResult<ClaimSpec> {
        parse_claim_spec(
            &self.claim_spec,
            self.holder_a_value(),
            self.market_s0,
            self.market_mu,
            self.market_sigma,
        )
    }

    /// Sorted key/value echo for the report; stable across runs.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("alpha".to_string(), match self.alpha {
                Some(a) => a.to_string(),
                None => format!("auto({})", self.alpha_param().map(|a| a.value()).unwrap_or(f64::NAN)),
            }),
            ("arbitrage_c".to_string(), self.arbitrage_c.to_string()),
            ("beta".to_string(), self.beta.to_string()),
            ("claim_spec".to_string(), self.claim_spec.clone()),
            ("gamma".to_string(), self.gamma.to_string()),
            ("grid_size".to_string(), self.grid_size.to_string()),
            ("holder_a".to_string(), self.holder_a_value().to_string()),
            ("hurst".to_string(), self.hurst.to_string()),
            ("market.mu".to_string(), self.market_mu.to_string()),
            ("market.r_max".to_string(), self.market_r_max.to_string()),
            ("market.rate_spec".to_string(), self.market_rate_spec.clone()),
            ("market.s0".to_string(), self.market_s0.to_string()),
            ("market.sigma".to_string(), self.market_sigma.to_string()),
            ("master_seed".to_string(), self.master_seed.to_string()),
            ("n_max".to_string(), self.n_max.to_string()),
            ("n_paths".to_string(), self.n_paths.to_string()),
            ("points_per_block".to_string(), self.points_per_block.to_string()),
            (
                "target_distribution_spec".to_string(),
                self.target_distribution_spec.clone(),
            ),
            ("v0".to_string(), self.v0.to_string()),
        ];
        kv.sort();
        kv
    }
}

pub fn parse_rate_spec(spec: &str) -> CResult<RateSpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["constant", r] => Ok(RateSpec::Constant(
            r.parse().map_err(|_| bad(format!("rate_spec constant: bad number '{r}'")))?,
        )),
        ["sine", base, amp, cycles] => Ok(RateSpec::Sine {
            base: base.parse().map_err(|_| bad("rate_spec sine: bad base"))?,
            amplitude: amp.parse().map_err(|_| bad("rate_spec sine: bad amplitude"))?,
            cycles: cycles.parse().map_err(|_| bad("rate_spec sine: bad cycles"))?,
        }),
        _ => Err(bad(format!(
            "unknown rate_spec '{spec}' (expected constant:<r> or sine:<base>:<amp>:<cycles>)"
        ))),
    }
}

pub fn parse_target_spec(spec: &str) -> CResult<TargetDistribution> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str, what: &str| -> CResult<f64> {
        s.parse()
            .map_err(|_| bad(format!("target {what}: bad number '{s}'")))
    };
    match parts.as_slice() {
        ["point_mass", c] => Ok(TargetDistribution::PointMass(num(c, "point_mass")?)),
        ["normal", mean, var] => {
            let v = num(var, "normal variance")?;
            if !(v > 0.0) {
                return Err(bad("target normal: variance outside (0, inf)"));
            }
            Ok(TargetDistribution::Normal { mean: num(mean, "normal mean")?, sd: v.sqrt() })
        }
        ["exponential", rate] => {
            let r = num(rate, "exponential rate")?;
            if !(r > 0.0) {
                return Err(bad("target exponential: rate outside (0, inf)"));
            }
            Ok(TargetDistribution::Exponential { rate: r })
        }
        ["two_point", p_hi, lo, hi] => {
            let p = num(p_hi, "two_point p_hi")?;
            if !(0.0..=1.0).contains(&p) {
                return Err(bad("target two_point: p_hi outside [0, 1]"));
            }
            Ok(TargetDistribution::TwoPoint {
                p_hi: p,
                lo: num(lo, "two_point lo")?,
                hi: num(hi, "two_point hi")?,
            })
        }
        _ => Err(bad(format!("unknown target_distribution_spec '{spec}'"))),
    }
}

/// Claim catalog: square_of_mark, european_call, asian_mean, digital,
/// barrier, lookback_max, custom_marks.
pub fn parse_claim_spec(
    spec: &str,
    holder_a: f64,
    s0: f64,
    mu: f64,
    sigma: f64,
) -> CResult<ClaimSpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str, what: &str| -> CResult<f64> {
        s.parse()
            .map_err(|_| bad(format!("claim {what}: bad number '{s}'")))
    };
    let nums = |s: &str, what: &str| -> CResult<Vec<f64>> {
        s.split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| bad(format!("claim {what}: bad number '{x}'")))
            })
            .collect()
    };
    let kind = match parts.as_slice() {
        ["square_of_mark", mark] => ClaimKind::FunctionalOfMarks {
            marks: vec![num(mark, "square_of_mark")?],
            payoff: MarkPayoff::SquareOfMark,
        },
        ["european_call", mark, strike] => ClaimKind::FunctionalOfMarks {
            marks: vec![num(mark, "european_call mark")?],
            payoff: MarkPayoff::CallOnStock {
                strike: num(strike, "european_call strike")?,
                cap: f64::INFINITY,
                s0,
                mu,
                sigma,
            },
        },
        ["european_call", mark, strike, cap] => ClaimKind::FunctionalOfMarks {
            marks: vec![num(mark, "european_call mark")?],
            payoff: MarkPayoff::CallOnStock {
                strike: num(strike, "european_call strike")?,
                cap: num(cap, "european_call cap")?,
                s0,
                mu,
                sigma,
            },
        },
        ["asian_mean", marks] => ClaimKind::FunctionalOfMarks {
            marks: nums(marks, "asian_mean")?,
            payoff: MarkPayoff::MeanOfStock { s0, mu, sigma },
        },
        ["digital", mark, level] => ClaimKind::Indicator {
            mark: num(mark, "digital mark")?,
            event: IndicatorEvent::StockAbove {
                level: num(level, "digital level")?,
                s0,
                mu,
                sigma,
            },
        },
        ["barrier", upto, level] => ClaimKind::SupFunctional {
            upto: num(upto, "barrier upto")?,
            payoff: SupPayoff::BarrierDigitalStock {
                level: num(level, "barrier level")?,
                s0,
                mu,
                sigma,
            },
        },
        ["lookback_max", upto] => ClaimKind::SupFunctional {
            upto: num(upto, "lookback_max")?,
            payoff: SupPayoff::LookbackMaxStock { s0, mu, sigma },
        },
        ["custom_marks", marks, weights] => ClaimKind::FunctionalOfMarks {
            marks: nums(marks, "custom_marks times")?,
            payoff: MarkPayoff::WeightedSum(nums(weights, "custom_marks weights")?),
        },
        _ => return Err(bad(format!("unknown claim_spec '{spec}'"))),
    };
    ClaimSpec::new(kind, holder_a).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r = Config::from_str_content("hurst = 0.7\nnonsense = 1\n");
        assert!(r.is_err());
        assert!(r.unwrap_err().0.contains("unknown key"));
    }

    #[test]
    fn window_violations_name_the_window() {
        let r = Config::from_str_content("gamma = 1.3\nbeta = 0.5\n");
        let msg = r.unwrap_err().0;
        assert!(msg.contains("beta outside (0, 1/(gamma*H)-1)"), "{msg}");

        let r2 = Config::from_str_content("gamma = 2.0\n");
        assert!(r2.unwrap_err().0.contains("gamma outside (1, 1/H)"));

        let r3 = Config::from_str_content("alpha = 0.29\n");
        assert!(r3.unwrap_err().0.contains("alpha outside (1-H, 1/2)"));
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = Config::from_str_content("# comment\n\nhurst = 0.75\nbeta=0.05\n").unwrap();
        assert_eq!(cfg.hurst, 0.75);
        assert_eq!(cfg.beta, 0.05);
    }

    #[test]
    fn claim_catalog_round_trip() {
        for spec in [
            "square_of_mark:0.5",
            "european_call:0.875:1.0",
            "asian_mean:0.25,0.5,0.75",
            "digital:0.375:1.0",
            "barrier:0.875:1.3",
            "lookback_max:0.875",
            "custom_marks:0.25,0.5:1.0,-0.5",
        ] {
            parse_claim_spec(spec, 0.42, 1.0, 0.0, 1.0).unwrap();
        }
        assert!(parse_claim_spec("bogus:1", 0.42, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn target_specs_round_trip() {
        for spec in [
            "point_mass:1.0",
            "normal:1.0:0.04",
            "exponential:1.0",
            "two_point:0.5:0.0:1.0",
        ] {
            parse_target_spec(spec).unwrap();
        }
        assert!(parse_target_spec("normal:0:-1").is_err());
    }
}
