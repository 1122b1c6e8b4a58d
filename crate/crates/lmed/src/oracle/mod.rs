//! Exact enumeration oracle for small discrete structural models.
//!
//! An [`NpsemSpec`] fixes a nonparametric structural equation model over the
//! longitudinal node order `L_1, A_1, Z_1, M_1, ..., L_tau, A_tau, Z_tau,
//! M_tau, Y` by giving every node a finite support and a conditional
//! probability table over its full observed history. Everything the
//! estimator targets can then be computed exactly:
//!
//! * the target functionals via two independent routes (the observed-data
//!   identification formula and forward simulation of the intervened model);
//! * the true sequential regressions and propensities, for injecting exact
//!   nuisances into the estimator;
//! * the efficiency bound (variance of the influence function);
//! * expansion remainders under controlled nuisance perturbations, which are
//!   the second-order terms multiple robustness rests on.

mod assumptions;
mod law;
mod tables;
mod truth;
mod vonmises;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use assumptions::{check_assumptions, AssumptionReport, Violation};
pub use law::{DiscreteLaw, NodeId};
pub use tables::{NuisanceTables, PerturbationOptions, SliceBufs};
pub use truth::{
    efficiency_bound, sequential_regression_truth, true_theta_counterfactual,
    true_theta_identification, EfficiencyBound, PathTruth, SequentialReport, SequentialTruth,
};
pub use vonmises::{von_mises_check, VonMisesEntry, VonMisesFamily, VonMisesReport};

/// Hard cap on the number of joint states the oracle will enumerate.
pub const MAX_STATES: u128 = 10_000_000;

/// A discrete structural model: supports and conditional probability tables.
///
/// Tables are flat, row-major over the stratum index formed from the node's
/// conditioning history (first history column most significant) with the
/// node's own value fastest. The final covariate table doubles as the outcome
/// distribution, with `outcome_values` giving the real value attached to each
/// outcome code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpsemSpec {
    pub tau: usize,
    /// Cards of `L_1..L_tau`.
    pub covariate_cards: Vec<usize>,
    /// Cards of `A_1..A_tau`.
    pub treatment_cards: Vec<usize>,
    /// Cards of `Z_1..Z_tau`.
    pub confounder_cards: Vec<usize>,
    /// Cards of `M_1..M_tau`.
    pub mediator_cards: Vec<usize>,
    /// Real outcome value for each outcome code.
    pub outcome_values: Vec<f64>,
    /// Marginal distribution of `L_1`.
    pub initial_covariate: Vec<f64>,
    /// Per time: treatment table over its history.
    pub treatment: Vec<Vec<f64>>,
    /// Per time: confounder table over its history.
    pub confounder: Vec<Vec<f64>>,
    /// Per time: mediator table over its history.
    pub mediator: Vec<Vec<f64>>,
    /// Per time `t = 1..tau`: table of `L_{t+1}` (the last is the outcome).
    pub next_covariate: Vec<Vec<f64>>,
    /// Treatment code meaning "censored at this point", if any.
    #[serde(default)]
    pub censored_level: Option<i64>,
}

/// Tolerance for conditional probability rows summing to one.
pub const CPT_ROW_TOL: f64 = 1e-12;

impl NpsemSpec {
    /// Parse and validate a JSON model description.
    pub fn from_json_str(text: &str) -> Result<NpsemSpec> {
        let spec: NpsemSpec = serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("model JSON: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Number of joint states of the model.
    pub fn state_count(&self) -> u128 {
        let mut total: u128 = self.outcome_values.len() as u128;
        for t in 0..self.tau {
            total = total
                .saturating_mul(self.covariate_cards[t] as u128)
                .saturating_mul(self.treatment_cards[t] as u128)
                .saturating_mul(self.confounder_cards[t] as u128)
                .saturating_mul(self.mediator_cards[t] as u128);
        }
        total
    }

    /// Validate table shapes, probability rows and the state-space guard.
    pub fn validate(&self) -> Result<()> {
        let tau = self.tau;
        if tau == 0 {
            return Err(Error::validation("model must have at least one time point"));
        }
        let check_len = |name: &str, len: usize| -> Result<()> {
            if len != tau {
                return Err(Error::validation(format!(
                    "`{name}` must have exactly {tau} entries, found {len}"
                )));
            }
            Ok(())
        };
        check_len("covariate_cards", self.covariate_cards.len())?;
        check_len("treatment_cards", self.treatment_cards.len())?;
        check_len("confounder_cards", self.confounder_cards.len())?;
        check_len("mediator_cards", self.mediator_cards.len())?;
        check_len("treatment", self.treatment.len())?;
        check_len("confounder", self.confounder.len())?;
        check_len("mediator", self.mediator.len())?;
        check_len("next_covariate", self.next_covariate.len())?;
        for (name, cards) in [
            ("covariate_cards", &self.covariate_cards),
            ("treatment_cards", &self.treatment_cards),
            ("confounder_cards", &self.confounder_cards),
            ("mediator_cards", &self.mediator_cards),
        ] {
            if cards.iter().any(|&c| c == 0) {
                return Err(Error::validation(format!("`{name}` contains a zero card")));
            }
        }
        if self.outcome_values.is_empty() {
            return Err(Error::validation("outcome support is empty"));
        }
        if self.outcome_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("outcome values must be finite"));
        }
        if let Some(c) = self.censored_level {
            if self.treatment_cards.iter().any(|&card| !(0..card as i64).contains(&c)) {
                return Err(Error::validation(
                    "censored level must be a valid treatment code at every time",
                ));
            }
        }
        if self.state_count() > MAX_STATES {
            return Err(Error::resource(format!(
                "state space has {} configurations, above the cap of {MAX_STATES}",
                self.state_count()
            )));
        }
        // Table shapes and row stochasticity are checked through the law view.
        let law = DiscreteLaw::new(self)?;
        law.check_tables()
    }

    /// Serialize as pretty JSON (deterministic field order).
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }
}

/// Treatment regimes compared by the target: per-time codes for the primary
/// regime (drives the outcome path) and the reference regime (drives the
/// mediator path).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionPair {
    pub primary: Vec<i64>,
    pub reference: Vec<i64>,
}

impl InterventionPair {
    pub fn new(primary: Vec<i64>, reference: Vec<i64>) -> InterventionPair {
        InterventionPair { primary, reference }
    }

    /// Both regimes at the same codes.
    pub fn same(codes: Vec<i64>) -> InterventionPair {
        InterventionPair { primary: codes.clone(), reference: codes }
    }

    /// Check the pair against a model: right length, codes in range, never
    /// the censored level.
    pub fn validate_for(&self, spec: &NpsemSpec) -> Result<()> {
        for (name, regime) in [("primary", &self.primary), ("reference", &self.reference)] {
            if regime.len() != spec.tau {
                return Err(Error::validation(format!(
                    "{name} regime must list {} treatment codes",
                    spec.tau
                )));
            }
            for (t, &code) in regime.iter().enumerate() {
                if !(0..spec.treatment_cards[t] as i64).contains(&code) {
                    return Err(Error::validation(format!(
                        "{name} regime code {code} at time {} is out of range",
                        t + 1
                    )));
                }
                if spec.censored_level == Some(code) {
                    return Err(Error::validation(format!(
                        "{name} regime selects the censored level at time {}",
                        t + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Options for the seeded random binary model generator used by tests,
/// simulations and reference fixtures.
#[derive(Debug, Clone, Copy)]
pub struct RandomSpecOptions {
    pub tau: usize,
    /// Every conditional probability is kept at or above this floor, which
    /// enforces strict positivity.
    pub floor: f64,
    /// When false, the intermediate variable is pure noise: its table ignores
    /// the history and nothing downstream reads it.
    pub z_confounding: bool,
    /// When true, nothing downstream reads the mediator, so all indirect
    /// effects are null by construction.
    pub null_mediator: bool,
    /// Add a third treatment level that censors the remainder of the row.
    pub censoring: bool,
}

impl Default for RandomSpecOptions {
    fn default() -> Self {
        RandomSpecOptions {
            tau: 1,
            floor: 0.15,
            z_confounding: true,
            null_mediator: false,
            censoring: false,
        }
    }
}

/// Generate a random binary-node model. All nodes are binary (the treatment
/// gains a third, censoring level when requested); every table row is drawn
/// uniformly subject to the positivity floor, with full history dependence
/// unless an option switches a dependence off.
pub fn random_binary_spec(opts: &RandomSpecOptions, seed: u64) -> NpsemSpec {
    law::generate_random_spec(opts, seed)
}
