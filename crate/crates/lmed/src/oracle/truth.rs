//! Target functionals by two independent routes, plus the efficiency bound.
//!
//! * The *identification route* plugs observed-data conditionals into the
//!   closed-form expressions: the outcome-path functional sums the outcome
//!   against covariate/confounder conditionals along histories with the
//!   treatments replaced by the primary regime and the mediators pinned to a
//!   path; the path-probability functional multiplies in the mediator
//!   conditionals under the reference regime.
//! * The *counterfactual route* forward-enumerates the mutilated structural
//!   model in which the interventions are applied by fiat, reading the
//!   functionals off the intervened distribution.
//!
//! The two routes share no traversal logic, so their agreement is a real test
//! of the identification result on enumerable models. The sequential route
//! ([`sequential_regression_truth`]) adds the third equivalent computation
//! through the backward-recursion tables.

use super::law::{DiscreteLaw, NodeId};
use super::tables::{NuisanceTables, SliceBufs};
use super::{InterventionPair, NpsemSpec};
use crate::error::Result;

/// Functionals attached to one mediator path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTruth {
    pub path: Vec<i64>,
    /// Mean outcome under the primary regime with mediators pinned to `path`.
    pub phi: f64,
    /// Probability of `path` under the reference regime.
    pub lambda: f64,
}

/// Target value with its per-path decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialTruth {
    pub theta: f64,
    pub paths: Vec<PathTruth>,
}

impl SequentialTruth {
    fn from_paths(paths: Vec<PathTruth>) -> SequentialTruth {
        let theta = paths.iter().map(|p| p.phi * p.lambda).sum();
        SequentialTruth { theta, paths }
    }

    /// Sum of path probabilities (must be one).
    pub fn lambda_total(&self) -> f64 {
        self.paths.iter().map(|p| p.lambda).sum()
    }
}

/// Every mediator path of a model, in mixed-radix order.
fn all_paths(spec: &NpsemSpec) -> Vec<Vec<i64>> {
    let total: usize = spec.mediator_cards.iter().product();
    (0..total)
        .map(|mut idx| {
            let mut path = vec![0i64; spec.tau];
            for t in (1..=spec.tau).rev() {
                let card = spec.mediator_cards[t - 1];
                path[t - 1] = (idx % card) as i64;
                idx /= card;
            }
            path
        })
        .collect()
}

fn checked_law(spec: &NpsemSpec, pair: &InterventionPair) -> Result<DiscreteLaw> {
    spec.validate()?;
    pair.validate_for(spec)?;
    DiscreteLaw::new(spec)
}

// ---------------------------------------------------------------------------
// Identification route: explicit nested sums over the plug-in formula.
// ---------------------------------------------------------------------------

/// Recursive sum over covariate/confounder values with treatments and
/// mediators substituted, weighting by the requested conditional factors.
/// `include_mediator_factor` multiplies in the mediator conditionals (the
/// path-probability formula); otherwise the mediator values are pure
/// substitutions (the outcome-path formula).
fn plugin_sum(
    law: &DiscreteLaw,
    regime: &[i64],
    path: &[i64],
    include_mediator_factor: bool,
    t: usize,
    state: &mut Vec<i64>,
    weight: f64,
    total: &mut f64,
) {
    let tau = law.tau();
    if t > tau {
        // Terminal step: the outcome factor. The outcome-path formula weighs
        // outcome values; the path-probability formula has already collected
        // all its factors and integrates the outcome away (total mass one).
        if include_mediator_factor {
            *total += weight;
        } else {
            let node = NodeId::Covariate(tau + 1);
            let row = law.row(node, state);
            let mean: f64 = row
                .iter()
                .enumerate()
                .map(|(y, &p)| p * law.spec().outcome_values[y])
                .sum();
            *total += weight * mean;
        }
        return;
    }
    let l_node = NodeId::Covariate(t);
    let l_pos = law.node_pos(law.node_column(l_node));
    let z_node = NodeId::Confounder(t);
    let z_pos = law.node_pos(law.node_column(z_node));
    let a_pos = law.node_pos(law.node_column(NodeId::Treatment(t)));
    let m_node = NodeId::Mediator(t);
    let m_pos = law.node_pos(law.node_column(m_node));
    state[a_pos] = regime[t - 1];
    state[m_pos] = path[t - 1];
    for l in 0..law.node_card(l_node) as i64 {
        let p_l = law.cond_prob(l_node, l, state);
        if p_l == 0.0 {
            continue;
        }
        state[l_pos] = l;
        for z in 0..law.node_card(z_node) as i64 {
            let p_z = law.cond_prob(z_node, z, state);
            if p_z == 0.0 {
                continue;
            }
            state[z_pos] = z;
            let p_m = if include_mediator_factor {
                law.cond_prob(m_node, path[t - 1], state)
            } else {
                1.0
            };
            if p_m == 0.0 {
                continue;
            }
            plugin_sum(
                law,
                regime,
                path,
                include_mediator_factor,
                t + 1,
                state,
                weight * p_l * p_z * p_m,
                total,
            );
        }
    }
    state[l_pos] = 0;
    state[z_pos] = 0;
    state[a_pos] = 0;
    state[m_pos] = 0;
}

/// Identification route: plug observed conditionals into the closed-form
/// expressions for every mediator path and combine.
pub fn true_theta_identification(
    spec: &NpsemSpec,
    pair: &InterventionPair,
) -> Result<SequentialTruth> {
    let law = checked_law(spec, pair)?;
    let paths = all_paths(spec)
        .into_iter()
        .map(|path| {
            let mut state = vec![0i64; law.state_len()];
            let mut phi = 0.0;
            plugin_sum(&law, &pair.primary, &path, false, 1, &mut state, 1.0, &mut phi);
            state.fill(0);
            let mut lambda = 0.0;
            plugin_sum(&law, &pair.reference, &path, true, 1, &mut state, 1.0, &mut lambda);
            PathTruth { path, phi, lambda }
        })
        .collect();
    Ok(SequentialTruth::from_paths(paths))
}

// ---------------------------------------------------------------------------
// Counterfactual route: forward enumeration of the mutilated model.
// ---------------------------------------------------------------------------

/// Counterfactual route: set the interventions by fiat and read the
/// functionals off the intervened distribution — the mean outcome with both
/// treatment and mediator vectors forced, and the mediator-path mass with
/// only the treatments forced.
pub fn true_theta_counterfactual(
    spec: &NpsemSpec,
    pair: &InterventionPair,
) -> Result<SequentialTruth> {
    let law = checked_law(spec, pair)?;
    let med_pos: Vec<usize> = (1..=spec.tau)
        .map(|t| law.node_pos(law.node_column(NodeId::Mediator(t))))
        .collect();

    // Path masses under the reference regime in one sweep.
    let paths = all_paths(spec);
    let mut lambda = vec![0.0; paths.len()];
    law.for_each_state_mutilated(Some(&pair.reference), None, &mut |state, p| {
        let mut idx = 0usize;
        for (t, &pos) in med_pos.iter().enumerate() {
            idx = idx * spec.mediator_cards[t] + state[pos] as usize;
        }
        lambda[idx] += p;
    });

    let paths = paths
        .into_iter()
        .zip(lambda)
        .map(|(path, lambda)| {
            let mut phi = 0.0;
            law.for_each_state_mutilated(Some(&pair.primary), Some(&path), &mut |state, p| {
                phi += p * law.outcome_value(state);
            });
            PathTruth { path, phi, lambda }
        })
        .collect();
    Ok(SequentialTruth::from_paths(paths))
}

// ---------------------------------------------------------------------------
// Sequential-regression route and efficiency bound.
// ---------------------------------------------------------------------------

/// Backward-recursion route with its agreement gaps against the plug-in
/// route.
#[derive(Debug, Clone)]
pub struct SequentialReport {
    pub truth: SequentialTruth,
    /// Largest per-path difference between the recursion seed and the
    /// plug-in outcome-path functional.
    pub max_phi_gap: f64,
    /// Same for the path-probability functional.
    pub max_lambda_gap: f64,
}

/// Compute the functionals through the backward recursions and report the
/// per-path gaps against the identification route.
pub fn sequential_regression_truth(
    spec: &NpsemSpec,
    pair: &InterventionPair,
) -> Result<SequentialReport> {
    let law = checked_law(spec, pair)?;
    let tables = NuisanceTables::exact(&law, pair);
    let ident = true_theta_identification(spec, pair)?;
    let mut max_phi_gap = 0.0f64;
    let mut max_lambda_gap = 0.0f64;
    let paths: Vec<PathTruth> = ident
        .paths
        .iter()
        .map(|entry| {
            let phi = tables.phi(&law, &entry.path);
            let lambda = tables.lambda(&law, &entry.path);
            max_phi_gap = max_phi_gap.max((phi - entry.phi).abs());
            max_lambda_gap = max_lambda_gap.max((lambda - entry.lambda).abs());
            PathTruth { path: entry.path.clone(), phi, lambda }
        })
        .collect();
    Ok(SequentialReport {
        truth: SequentialTruth::from_paths(paths),
        max_phi_gap,
        max_lambda_gap,
    })
}

/// Exact moments of the influence function under the model.
#[derive(Debug, Clone)]
pub struct EfficiencyBound {
    pub theta: f64,
    /// Mean of the influence function (zero up to float error).
    pub mean_score: f64,
    /// Variance of the influence function: the semiparametric bound.
    pub variance: f64,
}

/// Enumerate the influence function exactly: its mean (which must vanish)
/// and its variance, the efficiency bound for the target.
pub fn efficiency_bound(spec: &NpsemSpec, pair: &InterventionPair) -> Result<EfficiencyBound> {
    let law = checked_law(spec, pair)?;
    let tables = NuisanceTables::exact(&law, pair);
    let paths = tables.all_paths();
    let truths: Vec<(f64, f64)> = paths
        .iter()
        .map(|p| (tables.phi(&law, p), tables.lambda(&law, p)))
        .collect();
    let theta: f64 = truths.iter().map(|(phi, lambda)| phi * lambda).sum();
    let mut bufs = SliceBufs::new();
    let mut mean = 0.0;
    let mut second = 0.0;
    law.for_each_state(|state, p| {
        let mut s = 0.0;
        for (path, &(phi, lambda)) in paths.iter().zip(&truths) {
            let slices = tables.fill_slices(&law, state, path, 1, &mut bufs);
            let (_, d_trt) = slices.outcome_pair();
            let d_path = slices.score_path();
            s += (d_trt - phi) * lambda + (d_path - lambda) * phi;
        }
        mean += p * s;
        second += p * s * s;
    });
    Ok(EfficiencyBound { theta, mean_score: mean, variance: second - mean * mean })
}
