//! Run configuration files.
//!
//! A run config is a single flat JSON object shared by all commands; each
//! command reads the fields it needs and ignores the rest. Every field is
//! optional so the same file can drive several commands. Precedence is
//! command-line flag over config file over built-in default; the flag layer
//! lives in the binary, this module only parses files and applies them over
//! defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimator::EstimatorOptions;
use crate::nuisance::FamilyLearners;
use crate::simulate::{McGridOptions, Scenario, ALL_SCENARIOS};

/// Default replication count for simulation studies.
pub const DEFAULT_REPLICATIONS: usize = 100;
/// Default sample-size ladder for simulation studies.
pub const DEFAULT_SAMPLE_SIZES: [usize; 1] = [500];
/// Default perturbation scale for the oracle's expansion-identity check.
pub const DEFAULT_PERTURBATION_EPS: f64 = 1e-3;

/// On-disk run configuration. Unknown keys are rejected so typos fail loudly
/// instead of silently falling back to defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Longitudinal dataset CSV (`estimate`).
    pub data: Option<PathBuf>,
    /// Dataset schema sidecar JSON (`estimate`).
    pub schema: Option<PathBuf>,
    /// Discrete structural model JSON (`simulate`, `oracle`).
    pub spec: Option<PathBuf>,
    /// Treatment value fixed at each time point under the primary regime.
    pub a_prime: Option<Vec<i64>>,
    /// Treatment value fixed at each time point under the reference regime.
    pub a_star: Option<Vec<i64>>,
    /// Cross-fitting fold count.
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    /// Two-sided confidence level complement.
    pub alpha: Option<f64>,
    /// Propensity truncation floor.
    pub g_floor: Option<f64>,
    /// Candidate learners per nuisance family.
    pub learners: Option<FamilyLearners>,
    /// Report output path; stdout when absent.
    pub out: Option<PathBuf>,
    /// Worker thread bound (accepted for forward compatibility; the current
    /// engine is single-threaded).
    pub threads: Option<usize>,
    /// Simulation: sample-size ladder.
    pub sample_sizes: Option<Vec<usize>>,
    /// Simulation: replications per (scenario, n) cell.
    pub replications: Option<usize>,
    /// Simulation: scenarios to run; all four when absent.
    pub scenarios: Option<Vec<Scenario>>,
    /// Simulation: shrinkage for the saturated learner families.
    pub shrinkage: Option<f64>,
    /// Simulation: optional flat per-replication CSV path.
    pub csv_out: Option<PathBuf>,
    /// Oracle: perturbation scale for the expansion-identity residuals.
    pub perturbation_eps: Option<f64>,
}

impl RunConfig {
    /// Parse a config from JSON text.
    pub fn from_json_str(text: &str) -> Result<RunConfig> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("run config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Load and parse a config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("run config {}: {e}", path.display())))?;
        RunConfig::from_json_str(&text)
    }

    /// Field-level sanity checks that do not need the referenced files.
    pub fn validate(&self) -> Result<()> {
        if let Some(folds) = self.folds {
            if folds == 0 {
                return Err(Error::validation("folds must be at least 1"));
            }
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::validation(format!(
                    "alpha must lie strictly between 0 and 1, got {alpha}"
                )));
            }
        }
        if let Some(floor) = self.g_floor {
            if !(floor > 0.0 && floor < 0.5) {
                return Err(Error::validation(format!(
                    "the propensity floor must lie in (0, 0.5), got {floor}"
                )));
            }
        }
        if let Some(reps) = self.replications {
            if reps == 0 {
                return Err(Error::validation("replications must be at least 1"));
            }
        }
        if let Some(ns) = &self.sample_sizes {
            if ns.is_empty() {
                return Err(Error::validation("sample_sizes must not be empty"));
            }
            if let Some(&n) = ns.iter().find(|&&n| n < 2) {
                return Err(Error::validation(format!(
                    "every simulation sample size needs at least 2 observations, got {n}"
                )));
            }
        }
        if let Some(scenarios) = &self.scenarios {
            if scenarios.is_empty() {
                return Err(Error::validation("scenarios must not be empty"));
            }
        }
        if let Some(s) = self.shrinkage {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::validation(format!(
                    "shrinkage must be finite and non-negative, got {s}"
                )));
            }
        }
        if let Some(eps) = self.perturbation_eps {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::validation(format!(
                    "perturbation_eps must be positive and finite, got {eps}"
                )));
            }
        }
        if let Some(threads) = self.threads {
            if threads == 0 {
                return Err(Error::validation("threads must be at least 1"));
            }
        }
        Ok(())
    }

    /// Estimator options with this file's values applied over the defaults.
    pub fn estimator_options(&self) -> EstimatorOptions {
        let mut opts = EstimatorOptions::default();
        if let Some(v) = self.folds {
            opts.folds = v;
        }
        if let Some(v) = self.seed {
            opts.seed = v;
        }
        if let Some(v) = self.alpha {
            opts.alpha = v;
        }
        if let Some(v) = self.g_floor {
            opts.g_floor = v;
        }
        if let Some(l) = &self.learners {
            opts.learners = l.clone();
        }
        opts
    }

    /// Simulation grid options with this file's values applied over the
    /// defaults. The estimator template starts from [`estimator_options`];
    /// the grid replaces its learners per scenario.
    ///
    /// [`estimator_options`]: RunConfig::estimator_options
    pub fn grid_options(&self) -> McGridOptions {
        McGridOptions {
            ns: self
                .sample_sizes
                .clone()
                .unwrap_or_else(|| DEFAULT_SAMPLE_SIZES.to_vec()),
            reps: self.replications.unwrap_or(DEFAULT_REPLICATIONS),
            base_seed: self.seed.unwrap_or(0),
            scenarios: self.scenarios.clone().unwrap_or_else(|| ALL_SCENARIOS.to_vec()),
            shrinkage: self.shrinkage.unwrap_or(0.0),
            estimator: self.estimator_options(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_parses_to_all_defaults() {
        let config = RunConfig::from_json_str("{}").unwrap();
        let opts = config.estimator_options();
        assert_eq!(opts.folds, 5);
        assert_eq!(opts.seed, 0);
        assert_eq!(opts.alpha, 0.05);
        let grid = config.grid_options();
        assert_eq!(grid.ns, vec![500]);
        assert_eq!(grid.reps, DEFAULT_REPLICATIONS);
        assert_eq!(grid.scenarios, ALL_SCENARIOS.to_vec());
    }

    #[test]
    fn file_values_override_defaults() {
        let text = r#"{
            "folds": 3,
            "seed": 42,
            "alpha": 0.1,
            "g_floor": 0.02,
            "a_prime": [1, 1],
            "a_star": [0, 0],
            "sample_sizes": [100, 200],
            "replications": 7,
            "scenarios": ["all-correct", "both-misspecified"],
            "learners": {
                "treatment_propensity": [{"kind": "stratum-mean", "alpha": 0.5}],
                "mediator_propensity": [{"kind": "stratum-mean", "alpha": 0.5}],
                "outcome_regression": [{"kind": "constant"}],
                "path_regression": [{"kind": "constant"}]
            }
        }"#;
        let config = RunConfig::from_json_str(text).unwrap();
        let opts = config.estimator_options();
        assert_eq!(opts.folds, 3);
        assert_eq!(opts.seed, 42);
        assert_eq!(opts.alpha, 0.1);
        assert_eq!(opts.g_floor, 0.02);
        assert_eq!(opts.learners.treatment_propensity.len(), 1);
        let grid = config.grid_options();
        assert_eq!(grid.ns, vec![100, 200]);
        assert_eq!(grid.reps, 7);
        assert_eq!(grid.scenarios, vec![Scenario::AllCorrect, Scenario::BothMisspecified]);
        assert_eq!(config.a_prime.as_deref(), Some(&[1i64, 1][..]));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_json_str(r#"{"fold": 3}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"alpha": 1.5}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"folds": 0}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"g_floor": 0.7}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"sample_sizes": []}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"scenarios": ["made-up"]}"#).is_err());
        assert!(RunConfig::from_json_str("not json").is_err());
    }
}
