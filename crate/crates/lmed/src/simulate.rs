//! Data generation from discrete structural models and the Monte Carlo study
//! harness.
//!
//! Two generators produce datasets whose codes coincide with the model's
//! codes (every dictionary is the identity labeling `"0", "1", ...`):
//!
//! * [`sample_dataset`] draws independent trajectories by ancestral sampling.
//!   When the model declares a censoring treatment level, every node after a
//!   censoring draw is still sampled (so the always-observed outcome is
//!   defined) but *masked* in the emitted dataset, giving the exact monotone
//!   missingness pattern the estimator expects.
//! * [`enumerate_weighted_dataset`] emits one row per positive-probability
//!   state with its probability as the row weight. Estimating on this dataset
//!   with a single fold and saturated learners reproduces population
//!   functionals exactly, which turns asymptotic arguments into finite
//!   identities in tests.
//!
//! [`monte_carlo`] repeats sample-then-estimate under configurable learners
//! and reports per-replication results together with summary statistics
//! (bias, RMSE, coverage, mean scaled variance) against the enumerated truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LongitudinalDataset, MISSING_CODE};
use crate::error::{Error, Result};
use crate::estimator::{estimate_theta, EstimatorOptions, NuisanceSource};
use crate::learners::LearnerSpec;
use crate::nuisance::{FamilyLearners, InterventionPair};
use crate::oracle::{efficiency_bound, true_theta_identification, DiscreteLaw, NodeId};

/// Sample one complete trajectory (no masking) by walking the nodes in
/// causal order.
fn sample_state(law: &DiscreteLaw, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let mut state = vec![MISSING_CODE; law.state_len()];
    for node in law.nodes() {
        let dist = law.row(node, &state);
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut code = dist.len() - 1;
        for (k, &p) in dist.iter().enumerate() {
            cum += p;
            if u < cum {
                code = k;
                break;
            }
        }
        state[law.node_pos(law.node_column(node))] = code as i64;
    }
    state
}

/// Mask everything after the first censoring treatment draw, except the
/// always-observed outcome.
fn apply_censoring_mask(law: &DiscreteLaw, state: &mut [i64]) {
    let Some(censored) = law.spec().censored_level else {
        return;
    };
    let tau = law.tau();
    for t in 1..=tau {
        if state[4 * (t - 1) + 1] == censored {
            for value in state.iter_mut().take(4 * tau).skip(4 * (t - 1) + 2) {
                *value = MISSING_CODE;
            }
            return;
        }
    }
}

/// Assemble a dataset from (possibly masked) states, with identity label
/// dictionaries matching the model's codes.
fn dataset_from_states(
    law: &DiscreteLaw,
    states: &[Vec<i64>],
    weights: Option<Vec<f64>>,
) -> Result<LongitudinalDataset> {
    let tau = law.tau();
    let n = states.len();
    let code_value = |v: i64| if v == MISSING_CODE { f64::NAN } else { v as f64 };
    let mut covariates = vec![vec![Vec::with_capacity(n)]; tau];
    let mut confounders = vec![vec![Vec::with_capacity(n)]; tau];
    let mut treatments = vec![Vec::with_capacity(n); tau];
    let mut mediators = vec![Vec::with_capacity(n); tau];
    let mut outcome = Vec::with_capacity(n);
    for state in states {
        for t in 1..=tau {
            covariates[t - 1][0].push(code_value(state[4 * (t - 1)]));
            treatments[t - 1].push(state[4 * (t - 1) + 1]);
            confounders[t - 1][0].push(code_value(state[4 * (t - 1) + 2]));
            mediators[t - 1].push(state[4 * (t - 1) + 3]);
        }
        outcome.push(law.outcome_value(state));
    }
    let labels = |card: usize| (0..card as i64).map(|v| v.to_string()).collect::<Vec<_>>();
    let treatment_levels =
        (1..=tau).map(|t| labels(law.node_card(NodeId::Treatment(t)))).collect();
    let mediator_levels = (1..=tau).map(|t| labels(law.node_card(NodeId::Mediator(t)))).collect();
    LongitudinalDataset::from_parts(
        law.schema().clone(),
        covariates,
        confounders,
        treatments,
        mediators,
        outcome,
        treatment_levels,
        mediator_levels,
        weights,
    )
    .validate()
}

/// Draw `n` independent trajectories. Returns the dataset together with the
/// per-row (masked) state vectors, which injected-nuisance estimation needs.
pub fn sample_dataset(
    law: &DiscreteLaw,
    n: usize,
    seed: u64,
) -> Result<(LongitudinalDataset, Vec<Vec<i64>>)> {
    if n == 0 {
        return Err(Error::validation("sample size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        let mut state = sample_state(law, &mut rng);
        apply_censoring_mask(law, &mut state);
        states.push(state);
    }
    let data = dataset_from_states(law, &states, None)?;
    Ok((data, states))
}

/// One row per positive-probability state, weighted by its probability.
/// Under censoring, each row's observable part is masked; rows that share an
/// observed prefix stay separate, which weighted aggregation handles.
pub fn enumerate_weighted_dataset(
    law: &DiscreteLaw,
) -> Result<(LongitudinalDataset, Vec<Vec<i64>>)> {
    let mut states = Vec::new();
    let mut weights = Vec::new();
    law.for_each_state(|state, p| {
        if p > 0.0 {
            let mut s = state.to_vec();
            apply_censoring_mask(law, &mut s);
            states.push(s);
            weights.push(p);
        }
    });
    if states.is_empty() {
        return Err(Error::numeric("the model's state space carries no probability mass"));
    }
    let data = dataset_from_states(law, &states, Some(weights))?;
    Ok((data, states))
}

/// Render a dataset as CSV text in schema column order, with dictionary
/// labels for treatments/mediators and empty cells for missing values.
pub fn dataset_to_csv(data: &LongitudinalDataset) -> String {
    let schema = data.schema();
    let tau = schema.tau();
    let mut header: Vec<String> = Vec::new();
    for t in 1..=tau {
        header.extend(schema.covariate_names(t).iter().cloned());
        header.push(schema.treatment_name(t).to_string());
        header.extend(schema.confounder_names(t).iter().cloned());
        header.push(schema.mediator_name(t).to_string());
    }
    header.push(schema.outcome_name().to_string());
    let mut out = header.join(",");
    out.push('\n');
    let numeric = |v: f64| if v.is_nan() { String::new() } else { format!("{v}") };
    for row in 0..data.n() {
        let mut cells: Vec<String> = Vec::with_capacity(header.len());
        for t in 1..=tau {
            for slot in 0..schema.covariate_names(t).len() {
                let c = crate::data::ColumnRef { role: crate::data::Role::Covariate, time: t, slot };
                cells.push(numeric(data.value(c, row)));
            }
            let a = data.treatment_code(t, row);
            cells.push(if a == MISSING_CODE {
                String::new()
            } else {
                data.treatment_levels(t)[a as usize].clone()
            });
            for slot in 0..schema.confounder_names(t).len() {
                let c =
                    crate::data::ColumnRef { role: crate::data::Role::Confounder, time: t, slot };
                cells.push(numeric(data.value(c, row)));
            }
            let m = data.mediator_code(t, row);
            cells.push(if m == MISSING_CODE {
                String::new()
            } else {
                data.mediator_support(t)[m as usize].clone()
            });
        }
        cells.push(format!("{}", data.outcome()[row]));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Saturated stratum-lookup learners for every family. On discrete data these
/// are correctly specified for any model; `shrinkage` adds stabilizing mass
/// toward the global value in thin cells (`0.0` for exact cell averages).
pub fn saturated_learners(shrinkage: f64) -> FamilyLearners {
    FamilyLearners {
        treatment_propensity: vec![LearnerSpec::stratum_mean(shrinkage)],
        mediator_propensity: vec![LearnerSpec::stratum_mean(shrinkage)],
        outcome_regression: vec![LearnerSpec::stratum_mean(shrinkage)],
        path_regression: vec![LearnerSpec::stratum_mean(shrinkage)],
    }
}

/// Intercept-only learners for every family: deliberately misspecified
/// whenever the truth varies with history.
pub fn constant_learners() -> FamilyLearners {
    FamilyLearners {
        treatment_propensity: vec![LearnerSpec::constant()],
        mediator_propensity: vec![LearnerSpec::constant()],
        outcome_regression: vec![LearnerSpec::constant()],
        path_regression: vec![LearnerSpec::constant()],
    }
}

/// Monte Carlo study configuration.
#[derive(Debug, Clone)]
pub struct McOptions {
    /// Sample size per replication.
    pub n: usize,
    /// Number of replications.
    pub reps: usize,
    /// Replication `r` samples with seed `base_seed + r`.
    pub base_seed: u64,
    pub estimator: EstimatorOptions,
}

/// One replication's estimate.
#[derive(Debug, Clone)]
pub struct McRun {
    pub theta: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub truncated_weights: usize,
    pub fallbacks: usize,
}

/// A completed study with the enumerated truth attached.
#[derive(Debug, Clone)]
pub struct McStudy {
    pub truth: f64,
    pub n: usize,
    pub runs: Vec<McRun>,
}

impl McStudy {
    pub fn reps(&self) -> usize {
        self.runs.len()
    }

    pub fn mean_theta(&self) -> f64 {
        self.runs.iter().map(|r| r.theta).sum::<f64>() / self.reps() as f64
    }

    pub fn bias(&self) -> f64 {
        self.mean_theta() - self.truth
    }

    /// Sample standard deviation of the estimates across replications.
    pub fn sd_theta(&self) -> f64 {
        let mean = self.mean_theta();
        let ss: f64 = self.runs.iter().map(|r| (r.theta - mean).powi(2)).sum();
        (ss / (self.reps() as f64 - 1.0)).sqrt()
    }

    /// Monte Carlo standard error of the mean estimate (for bias tests).
    pub fn mc_se(&self) -> f64 {
        self.sd_theta() / (self.reps() as f64).sqrt()
    }

    pub fn rmse(&self) -> f64 {
        let ms: f64 =
            self.runs.iter().map(|r| (r.theta - self.truth).powi(2)).sum::<f64>()
                / self.reps() as f64;
        ms.sqrt()
    }

    /// Fraction of replications whose confidence interval covers the truth.
    pub fn coverage(&self) -> f64 {
        let hits = self
            .runs
            .iter()
            .filter(|r| r.ci.0 <= self.truth && self.truth <= r.ci.1)
            .count();
        hits as f64 / self.reps() as f64
    }

    /// Mean of `n * se^2` across replications: the per-observation variance
    /// the estimator reports, comparable to the efficiency bound.
    pub fn mean_scaled_variance(&self) -> f64 {
        self.runs.iter().map(|r| self.n as f64 * r.se * r.se).sum::<f64>() / self.reps() as f64
    }
}

/// One replication: sample with `seed`, estimate with a fold split decoupled
/// from the sampling stream.
fn one_replication(
    law: &DiscreteLaw,
    pair: &InterventionPair,
    n: usize,
    seed: u64,
    estimator: &EstimatorOptions,
) -> Result<McRun> {
    let (data, _) = sample_dataset(law, n, seed)?;
    let mut est_opts = estimator.clone();
    est_opts.seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let est = estimate_theta(&data, pair, &est_opts, NuisanceSource::Fitted)?;
    Ok(McRun {
        theta: est.theta,
        se: est.se,
        ci: est.ci,
        truncated_weights: est.diagnostics.truncated_weights,
        fallbacks: est.diagnostics.fallbacks,
    })
}

/// Run `reps` sample-then-estimate replications against the enumerated truth.
/// Any replication failure aborts the study (see [`run_mc_grid`] for the
/// failure-tolerant batch runner).
pub fn monte_carlo(
    law: &DiscreteLaw,
    pair: &InterventionPair,
    opts: &McOptions,
) -> Result<McStudy> {
    if opts.reps == 0 {
        return Err(Error::validation("a study needs at least one replication"));
    }
    let truth = true_theta_identification(law.spec(), pair)?.theta;
    let mut runs = Vec::with_capacity(opts.reps);
    for r in 0..opts.reps {
        let seed = opts.base_seed.wrapping_add(r as u64);
        runs.push(one_replication(law, pair, opts.n, seed, &opts.estimator)?);
    }
    Ok(McStudy { truth, n: opts.n, runs })
}

/// Nuisance-misspecification scenario of a robustness study. "Misspecified"
/// substitutes the intercept-only learner for the named side; the other side
/// keeps saturated (correct-on-discrete-data) learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    AllCorrect,
    /// Both sequential regression families are intercept-only.
    QMisspecified,
    /// Both assignment-model families are intercept-only.
    GMisspecified,
    BothMisspecified,
}

/// The full scenario grid, in canonical order.
pub const ALL_SCENARIOS: [Scenario; 4] = [
    Scenario::AllCorrect,
    Scenario::QMisspecified,
    Scenario::GMisspecified,
    Scenario::BothMisspecified,
];

impl Scenario {
    /// Learner substitution for this scenario. `shrinkage` smooths the
    /// saturated families (zero for exact cell averages).
    pub fn learners(self, shrinkage: f64) -> FamilyLearners {
        let good = || vec![LearnerSpec::stratum_mean(shrinkage)];
        let bad = || vec![LearnerSpec::constant()];
        match self {
            Scenario::AllCorrect => saturated_learners(shrinkage),
            Scenario::QMisspecified => FamilyLearners {
                treatment_propensity: good(),
                mediator_propensity: good(),
                outcome_regression: bad(),
                path_regression: bad(),
            },
            Scenario::GMisspecified => FamilyLearners {
                treatment_propensity: bad(),
                mediator_propensity: bad(),
                outcome_regression: good(),
                path_regression: good(),
            },
            Scenario::BothMisspecified => constant_learners(),
        }
    }

    /// Stable kebab-case name (the serialized form).
    pub fn name(self) -> &'static str {
        match self {
            Scenario::AllCorrect => "all-correct",
            Scenario::QMisspecified => "q-misspecified",
            Scenario::GMisspecified => "g-misspecified",
            Scenario::BothMisspecified => "both-misspecified",
        }
    }
}

/// Batch study configuration: a scenario grid crossed with a sample-size
/// ladder.
#[derive(Debug, Clone)]
pub struct McGridOptions {
    /// Sample sizes of the ladder.
    pub ns: Vec<usize>,
    /// Replications per (scenario, n) cell.
    pub reps: usize,
    pub base_seed: u64,
    pub scenarios: Vec<Scenario>,
    /// Shrinkage for the saturated learner families.
    pub shrinkage: f64,
    /// Template estimator options; the learners field is replaced per
    /// scenario.
    pub estimator: EstimatorOptions,
}

/// Aggregates of one (scenario, n) cell, over its completed replications.
#[derive(Debug, Clone, Serialize)]
pub struct McCell {
    pub scenario: Scenario,
    pub n: usize,
    pub completed: usize,
    pub failures: usize,
    pub mean_theta: f64,
    pub mean_bias: f64,
    /// Sample standard deviation of the estimates.
    pub mc_sd: f64,
    /// Mean reported standard error.
    pub mean_se: f64,
    /// Fraction of intervals covering the enumerated truth.
    pub coverage: f64,
    pub rmse: f64,
}

/// One completed replication in flat form (for CSV export).
#[derive(Debug, Clone, Serialize)]
pub struct McReplication {
    pub scenario: Scenario,
    pub n: usize,
    pub rep: usize,
    pub theta: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Full study output: enumerated references plus per-cell aggregates and the
/// flat replication table.
#[derive(Debug, Clone, Serialize)]
pub struct McGridReport {
    /// Enumerated target value.
    pub theta: f64,
    /// Enumerated influence-function variance (the efficiency bound).
    pub var_score: f64,
    pub cells: Vec<McCell>,
    pub replications: Vec<McReplication>,
}

/// Run the scenario-by-sample-size grid. Replication failures are recorded in
/// their cell, never fatal; seeds are assigned per replication index so cells
/// at the same `n` share datasets across scenarios.
pub fn run_mc_grid(
    law: &DiscreteLaw,
    pair: &InterventionPair,
    opts: &McGridOptions,
) -> Result<McGridReport> {
    if opts.reps == 0 {
        return Err(Error::validation("a study needs at least one replication"));
    }
    if opts.ns.is_empty() || opts.scenarios.is_empty() {
        return Err(Error::validation("the study grid must name at least one n and scenario"));
    }
    let truth = true_theta_identification(law.spec(), pair)?.theta;
    let bound = efficiency_bound(law.spec(), pair)?;
    let mut cells = Vec::new();
    let mut replications = Vec::new();
    for &scenario in &opts.scenarios {
        let mut estimator = opts.estimator.clone();
        estimator.learners = scenario.learners(opts.shrinkage);
        for (ni, &n) in opts.ns.iter().enumerate() {
            let mut runs: Vec<McRun> = Vec::with_capacity(opts.reps);
            let mut failures = 0usize;
            for rep in 0..opts.reps {
                let seed = opts
                    .base_seed
                    .wrapping_add((ni * opts.reps + rep) as u64);
                match one_replication(law, pair, n, seed, &estimator) {
                    Ok(run) => {
                        replications.push(McReplication {
                            scenario,
                            n,
                            rep,
                            theta: run.theta,
                            se: run.se,
                            ci_lo: run.ci.0,
                            ci_hi: run.ci.1,
                        });
                        runs.push(run);
                    }
                    Err(_) => failures += 1,
                }
            }
            if runs.is_empty() {
                return Err(Error::numeric(format!(
                    "every replication failed in cell ({}, n={n})",
                    scenario.name()
                )));
            }
            let study = McStudy { truth, n, runs };
            cells.push(McCell {
                scenario,
                n,
                completed: study.reps(),
                failures,
                mean_theta: study.mean_theta(),
                mean_bias: study.bias(),
                mc_sd: study.sd_theta(),
                mean_se: study.runs.iter().map(|r| r.se).sum::<f64>() / study.reps() as f64,
                coverage: study.coverage(),
                rmse: study.rmse(),
            });
        }
    }
    Ok(McGridReport { theta: truth, var_score: bound.variance, cells, replications })
}

/// Render the flat replication table as CSV.
pub fn replications_to_csv(rows: &[McReplication]) -> String {
    let mut out = String::from("scenario,n,rep,theta,se,ci_lo,ci_hi\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.scenario.name(),
            r.n,
            r.rep,
            r.theta,
            r.se,
            r.ci_lo,
            r.ci_hi
        ));
    }
    out
}
