//! Scenario configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wiener_lab::DriftSpec;

/// Check ids accepted in scenario configs. Ids appear verbatim in reports.
pub const SUPPORTED_CHECKS: &[&str] = &[
    "det2",
    "roundtrip",
    "inverse-identities",
    "rho-identity",
    "expect-rho",
    "entropy-identity",
    "carleman",
    "novikov",
    "kazamaki",
    "cond-nice",
    "cond-holder",
    "bounded-grad",
    "lipschitz-vs-hs",
    "picard",
    "mehler",
    "convex-interp",
    "lsi",
    "cross-resolution",
    "stopped-consistency",
    "piecewise-glue",
];

/// Tolerance knobs; every threshold in the check battery derives from one
/// of these.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Monte Carlo band width in standard errors.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Absolute tolerance for algebraically exact identities.
    #[serde(default = "default_exact")]
    pub exact: f64,
    /// Absolute tolerance for finite-difference identities.
    #[serde(default = "default_fd")]
    pub fd: f64,
    /// Picard-vs-explicit agreement tolerance.
    #[serde(default = "default_picard")]
    pub picard: f64,
}

fn default_sigma() -> f64 {
    3.0
}
fn default_exact() -> f64 {
    1e-10
}
fn default_fd() -> f64 {
    1e-8
}
fn default_picard() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sigma: default_sigma(),
            exact: default_exact(),
            fd: default_fd(),
            picard: default_picard(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub drift: DriftSpec,
    /// Grid steps.
    pub n: usize,
    /// Monte Carlo path count.
    pub paths: usize,
    pub seed: u64,
    pub checks: Vec<String>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// A configuration problem; each carries one human-readable line.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for line in &self.0 {
            writeln!(f, "config error: {line}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(vec![format!("cannot read {}: {e}", path.display())]))?;
        let cfg: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(vec![format!("malformed JSON in {}: {e}", path.display())]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("n must be at least 1".into());
        }
        if self.paths < 2 {
            problems.push("paths must be at least 2".into());
        }
        for id in &self.checks {
            if !SUPPORTED_CHECKS.contains(&id.as_str()) {
                problems.push(format!(
                    "unknown check id '{id}'; supported: {}",
                    SUPPORTED_CHECKS.join(" ")
                ));
            }
        }
        if let Err(e) = wiener_lab::make_builtin(&self.drift) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "scenario": "demo",
            "drift": {"type": "ou", "params": {"a": 0.5}},
            "n": 16,
            "paths": 100,
            "seed": 1,
            "checks": ["det2", "roundtrip"]
        })
    }

    #[test]
    fn parses_and_validates() {
        let cfg: ScenarioConfig = serde_json::from_value(base_json()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.tolerances, Tolerances::default());
    }

    #[test]
    fn rejects_unknown_check_and_drift() {
        let mut v = base_json();
        v["checks"] = serde_json::json!(["not-a-check"]);
        let cfg: ScenarioConfig = serde_json::from_value(v).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.0[0].contains("not-a-check"));

        let mut v = base_json();
        v["drift"] = serde_json::json!({"type": "mystery"});
        let cfg: ScenarioConfig = serde_json::from_value(v).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.0[0].contains("mystery"));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg: ScenarioConfig = serde_json::from_value(base_json()).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
