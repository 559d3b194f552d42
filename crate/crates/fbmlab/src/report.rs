//! Experiment reports: per-path records, aggregates and verdicts, rendered
//! to a deterministic structured-text form.
//!
//! Rendering is byte-stable: fields are emitted in a fixed order, floats
//! with 17 significant digits, and nothing time- or machine-dependent is
//! included (timings go to the console, never into the report).

use crate::verify::TestVerdict;

/// Serialize a float with 17 significant digits (lossless round trip).
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

/// One Monte Carlo path's outcome.
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub index: u64,
    pub seed: u64,
    pub resolved: bool,
    pub terminal: f64,
    pub target: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub command: String,
    pub config_echo: Vec<(String, String)>,
    pub records: Vec<PathRecord>,
    pub aggregates: Vec<(String, f64)>,
    pub verdicts: Vec<TestVerdict>,
    pub version: String,
}

impl ExperimentReport {
    pub fn new(command: &str) -> Self {
        ExperimentReport {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            ..Default::default()
        }
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Recompute resolved-fraction and terminal-mean aggregates from the
    /// per-path records (every reported aggregate must be recomputable).
    pub fn recompute_path_aggregates(&self) -> Vec<(String, f64)> {
        if self.records.is_empty() {
            return Vec::new();
        }
        let n = self.records.len() as f64;
        let resolved = self.records.iter().filter(|r| r.resolved).count() as f64;
        let mean_terminal = self.records.iter().map(|r| r.terminal).sum::<f64>() / n;
        vec![
            ("resolved_fraction".to_string(), resolved / n),
            ("mean_terminal".to_string(), mean_terminal),
        ]
    }

    /// Deterministic structured-text rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        out.push_str(&format!("  \"command\": \"{}\",\n", self.command));
        out.push_str(&format!("  \"version\": \"{}\",\n", self.version));
        out.push_str("  \"config\": {\n");
        for (i, (k, v)) in self.config_echo.iter().enumerate() {
            let comma = if i + 1 < self.config_echo.len() { "," } else { "" };
            out.push_str(&format!("    \"{k}\": \"{v}\"{comma}\n"));
        }
        out.push_str("  },\n");
        out.push_str("  \"aggregates\": {\n");
        for (i, (k, v)) in self.aggregates.iter().enumerate() {
            let comma = if i + 1 < self.aggregates.len() { "," } else { "" };
            out.push_str(&format!("    \"{k}\": {}{comma}\n", fmt_f64(*v)));
        }
        out.push_str("  },\n");
        out.push_str("  \"verdicts\": [\n");
        for (i, v) in self.verdicts.iter().enumerate() {
            let comma = if i + 1 < self.verdicts.len() { "," } else { "" };
            out.push_str(&format!(
                "    {{\"name\": \"{}\", \"statistic\": {}, \"threshold\": {}, \"passed\": {}, \"n\": {}, \"notes\": \"{}\"}}{comma}\n",
                v.name,
                fmt_f64(v.statistic),
                fmt_f64(v.threshold),
                v.passed,
                v.n_samples,
                v.notes.replace('"', "'"),
            ));
        }
        out.push_str("  ],\n");
        out.push_str(&format!("  \"n_records\": {},\n", self.records.len()));
        out.push_str("  \"records\": [\n");
        for (i, r) in self.records.iter().enumerate() {
            let comma = if i + 1 < self.records.len() { "," } else { "" };
            out.push_str(&format!(
                "    {{\"index\": {}, \"seed\": {}, \"resolved\": {}, \"terminal\": {}, \"target\": {}}}{comma}\n",
                r.index,
                r.seed,
                r.resolved,
                fmt_f64(r.terminal),
                fmt_f64(r.target),
            ));
        }
        out.push_str("  ]\n}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for &x in &[0.0, 1.0, -1.5, 0.1, 1.0 / 3.0, 2.5e-17, -9.9e300] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut r = ExperimentReport::new("demo");
        r.config_echo.push(("hurst".into(), "0.7".into()));
        r.records.push(PathRecord {
            index: 0,
            seed: 42,
            resolved: true,
            terminal: 1.25,
            target: 1.25,
        });
        r.aggregates = r.recompute_path_aggregates();
        let a = r.render();
        let b = r.render();
        assert_eq!(a, b);
        assert!(a.contains("\"resolved_fraction\": 1.0000000000000000e0"));
    }

    #[test]
    fn aggregates_recompute_from_records() {
        let mut r = ExperimentReport::new("demo");
        for i in 0..4 {
            r.records.push(PathRecord {
                index: i,
                seed: i,
                resolved: i % 2 == 0,
                terminal: i as f64,
                target: 0.0,
            });
        }
        let agg = r.recompute_path_aggregates();
        assert_eq!(agg[0].1, 0.5);
        assert_eq!(agg[1].1, 1.5);
    }
}
