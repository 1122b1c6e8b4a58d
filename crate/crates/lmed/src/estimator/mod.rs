//! Cross-fitted, sequentially doubly robust estimation of interventional
//! direct and indirect effects.
//!
//! The driver walks time points backwards. At each time it (a) fits the
//! treatment/mediator assignment models on unexpanded rows, (b) fits the
//! mediator-step outcome regression on the pooled expansion filtered to rows
//! whose observed mediator equals their hypothetical value, (c) fits the
//! treatment-step and path-probability regressions filtered to the primary
//! and reference treatment arms, and (d) rolls the three augmented
//! pseudo-outcome columns one step down. The surviving level-one columns are
//! averaged per mediator path and fold into the path functionals, combined
//! into the target, and centered into per-observation influence scores for
//! variance and interval estimation.
//!
//! Nuisances can also be *injected* from exact tables computed on a discrete
//! model; the rest of the pipeline is unchanged, which turns asymptotic
//! identities into exact finite checks.

pub mod scores;

pub use scores::TrajectorySlices;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{HistoryKind, LongitudinalDataset, MediatorPath, PooledStack};
use crate::error::{Error, Result};
use crate::learners::FoldPartition;
use crate::nuisance::{
    cross_fit_filtered, cross_fit_propensities, indicator_ratio, level_design, validate_regimes,
    FamilyLearners, InterventionPair, PropensityColumns, DEFAULT_G_FLOOR,
};
use crate::oracle::{DiscreteLaw, NodeId, NuisanceTables};

/// Options for one estimation run.
#[derive(Debug, Clone)]
pub struct EstimatorOptions {
    /// Cross-fitting fold count (1 = fit on all, predict on all).
    pub folds: usize,
    /// Seed for the fold partition.
    pub seed: u64,
    /// Two-sided confidence level complement (0.05 gives 95% intervals).
    pub alpha: f64,
    /// Lower truncation bound for propensities entering denominators.
    pub g_floor: f64,
    pub learners: FamilyLearners,
    /// Retain all per-level nuisance/score columns in the result (for
    /// diagnostics and tests).
    pub keep_columns: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            folds: 5,
            seed: 0,
            alpha: 0.05,
            g_floor: DEFAULT_G_FLOOR,
            learners: FamilyLearners::default(),
            keep_columns: false,
        }
    }
}

/// Where nuisance values come from.
#[derive(Clone, Copy)]
pub enum NuisanceSource<'a> {
    /// Cross-fit from the data (the production path).
    Fitted,
    /// Evaluate exact tables from a discrete model at each row's history.
    /// `states` aligns with the dataset's source rows.
    Injected { law: &'a DiscreteLaw, tables: &'a NuisanceTables, states: &'a [Vec<i64>] },
}

/// Estimated functionals of one mediator path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEstimate {
    /// Mediator codes `(m_1, ..., m_tau)`.
    pub codes: Vec<i64>,
    /// The same path in level labels.
    pub labels: Vec<String>,
    /// Estimated mean outcome under the primary regime at this path.
    pub phi: f64,
    /// Estimated path probability under the reference regime.
    pub lambda: f64,
}

/// Estimation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Number of (time, observation, family) events where the propensity
    /// floor truncated a used denominator.
    pub truncated_weights: usize,
    /// Number of fold-level empty-filtered-subset fallbacks.
    pub fallbacks: usize,
    pub folds: usize,
    pub seed: u64,
}

/// Per-level nuisance and score columns (kept only on request).
#[derive(Debug, Clone, Default)]
pub struct LevelColumns {
    pub q_med: Vec<f64>,
    pub q_trt: Vec<f64>,
    pub q_path: Vec<f64>,
    /// Mediator ratio per pooled row.
    pub w_med: Vec<f64>,
    /// Treatment ratios per source row.
    pub w_prime: Vec<f64>,
    pub w_star: Vec<f64>,
    pub d_med: Vec<f64>,
    pub d_trt: Vec<f64>,
    pub d_path: Vec<f64>,
}

/// Result of a single-target estimation run.
#[derive(Debug, Clone)]
pub struct ThetaEstimate {
    pub theta: f64,
    /// Standard error of `theta`.
    pub se: f64,
    pub ci: (f64, f64),
    pub alpha: f64,
    pub paths: Vec<PathEstimate>,
    /// Per-source-observation influence scores (already centered).
    pub scores: Vec<f64>,
    /// Sum of row weights (the row count when unweighted).
    pub n_effective: f64,
    pub diagnostics: Diagnostics,
    /// `columns[t - 1]` per time, when `keep_columns` was set.
    pub columns: Option<Vec<LevelColumns>>,
}

/// One effect contrast with its Wald interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastEstimate {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci: (f64, f64),
}

/// Direct/indirect/total decomposition from three target runs sharing folds
/// and learners.
#[derive(Debug, Clone)]
pub struct MediationReport {
    /// Target under (primary treatments, reference mediator distribution).
    pub theta_cross: ThetaEstimate,
    /// Target under (primary, primary).
    pub theta_primary: ThetaEstimate,
    /// Target under (reference, reference).
    pub theta_reference: ThetaEstimate,
    pub contrasts: Vec<ContrastEstimate>,
}

use scores::gated;

fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

fn validate_options(data: &LongitudinalDataset, opts: &EstimatorOptions) -> Result<()> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::validation("alpha must lie strictly between 0 and 1"));
    }
    if opts.folds == 0 {
        return Err(Error::validation("fold count must be at least 1"));
    }
    if !(opts.g_floor > 0.0 && opts.g_floor < 0.5) {
        return Err(Error::validation("propensity floor must lie in (0, 0.5)"));
    }
    if data.n() < 2 {
        return Err(Error::validation("estimation requires at least two observations"));
    }
    if data.weights().is_some() && opts.folds != 1 {
        return Err(Error::validation(
            "weighted (enumeration) datasets require a single fold",
        ));
    }
    Ok(())
}

/// Exact per-source propensity columns from injected tables.
fn injected_propensities(
    law: &DiscreteLaw,
    tables: &NuisanceTables,
    states: &[Vec<i64>],
    pair: &InterventionPair,
    t: usize,
) -> PropensityColumns {
    let n = states.len();
    let arity = law.node_card(NodeId::Mediator(t));
    let trt_cols = tables.treatment_history(t);
    let med_cols = tables.mediator_history(t);
    let mut g_prime = vec![f64::NAN; n];
    let mut g_star = vec![f64::NAN; n];
    let mut g_med = vec![f64::NAN; n * arity];
    for (src, state) in states.iter().enumerate() {
        let observed = |cols: &[crate::data::ColumnRef]| {
            cols.iter().all(|&c| state[law.node_pos(c)] >= 0)
        };
        if observed(trt_cols) {
            let stratum = law.stratum_of_state(trt_cols, state);
            g_prime[src] = tables.g_trt_at(t, stratum, pair.primary[t - 1]);
            g_star[src] = tables.g_trt_at(t, stratum, pair.reference[t - 1]);
        }
        if observed(med_cols) {
            let stratum = law.stratum_of_state(med_cols, state);
            for m in 0..arity {
                g_med[src * arity + m] = tables.g_med_at(t, stratum, m as i64);
            }
        }
    }
    PropensityColumns { g_prime, g_star, g_med, arity }
}

/// Exact per-pooled-row regression columns from injected tables.
struct InjectedQ {
    q_med: Vec<f64>,
    q_trt: Vec<f64>,
    q_path: Vec<f64>,
}

fn injected_regressions(
    law: &DiscreteLaw,
    tables: &NuisanceTables,
    states: &[Vec<i64>],
    stack: &PooledStack,
    t: usize,
) -> InjectedQ {
    let tau = law.tau();
    let rows = stack.level(t).rows;
    let trt_cols = tables.treatment_history(t);
    let med_cols = tables.mediator_history(t);
    let mut q = InjectedQ {
        q_med: vec![f64::NAN; rows],
        q_trt: vec![f64::NAN; rows],
        q_path: vec![f64::NAN; rows],
    };
    let mut path_buf = vec![0i64; tau];
    for r in 0..rows {
        let src = stack.source_row(t, r);
        let state = &states[src];
        for s in t..=tau {
            path_buf[s - 1] = stack.suffix_code(t, r, s);
        }
        let suffix_idx = tables.suffix_index(t, &path_buf);
        if med_cols.iter().all(|&c| state[law.node_pos(c)] >= 0) {
            let stratum = law.stratum_of_state(med_cols, state);
            q.q_med[r] = tables.q_med_at(t, suffix_idx, stratum);
        }
        if trt_cols.iter().all(|&c| state[law.node_pos(c)] >= 0) {
            let stratum = law.stratum_of_state(trt_cols, state);
            q.q_trt[r] = tables.q_trt_at(t, suffix_idx, stratum);
            q.q_path[r] = tables.q_path_at(t, suffix_idx, stratum);
        }
    }
    q
}

/// Estimate the target for one regime pair.
pub fn estimate_theta(
    data: &LongitudinalDataset,
    pair: &InterventionPair,
    opts: &EstimatorOptions,
    source: NuisanceSource,
) -> Result<ThetaEstimate> {
    validate_regimes(data, pair)?;
    validate_options(data, opts)?;
    let n = data.n();
    let tau = data.schema().tau();
    if let NuisanceSource::Injected { law, states, .. } = source {
        if states.len() != n {
            return Err(Error::validation("injected states must align with dataset rows"));
        }
        if law.tau() != tau {
            return Err(Error::validation("injected model horizon does not match the schema"));
        }
        for t in 1..=tau {
            if law.node_card(NodeId::Mediator(t)) != data.mediator_arity(t) {
                return Err(Error::validation(
                    "injected model mediator support does not match the dataset",
                ));
            }
        }
    }

    let partition = if opts.folds == 1 {
        FoldPartition::single(n)
    } else {
        FoldPartition::new(n, opts.folds, opts.seed)?
    };
    let stack = PooledStack::build(data);
    let (y_lo, y_hi) = data.outcome_range();
    let weights = data.weights();

    let mut truncated = 0usize;
    let mut fallbacks = 0usize;
    let mut kept: Vec<LevelColumns> = if opts.keep_columns {
        (0..tau).map(|_| LevelColumns::default()).collect()
    } else {
        Vec::new()
    };

    // Pseudo-outcome columns of the level above the current one (seeded with
    // the observed outcome and the constant 1 over source rows).
    let mut prev_d_trt: Vec<f64> = data.outcome().to_vec();
    let mut prev_d_path: Vec<f64> = vec![1.0; n];

    for t in (1..=tau).rev() {
        let level = stack.level(t);
        let rows = level.rows;
        let arity = level.arity;
        let row_fold: Vec<u16> =
            (0..rows).map(|r| partition.fold_of(stack.source_row(t, r))).collect();
        let row_weight: Option<Vec<f64>> =
            weights.map(|w| (0..rows).map(|r| w[stack.source_row(t, r)]).collect());

        // Assignment models and ratio columns.
        let props = match source {
            NuisanceSource::Fitted => {
                cross_fit_propensities(data, pair, t, &partition, &opts.learners)?
            }
            NuisanceSource::Injected { law, tables, states } => {
                injected_propensities(law, tables, states, pair, t)
            }
        };
        debug_assert_eq!(props.arity, arity);
        let mut w_prime = vec![0.0; n];
        let mut w_star = vec![0.0; n];
        for src in 0..n {
            let code = data.treatment_code(t, src);
            let (wp, trunc_p) =
                indicator_ratio(code == pair.primary[t - 1], props.g_prime[src], opts.g_floor);
            let (ws, trunc_s) =
                indicator_ratio(code == pair.reference[t - 1], props.g_star[src], opts.g_floor);
            w_prime[src] = wp;
            w_star[src] = ws;
            truncated += usize::from(trunc_p) + usize::from(trunc_s);
            let m = data.mediator_code(t, src);
            if m >= 0 && props.g_med[src * arity + m as usize] < opts.g_floor {
                truncated += 1;
            }
        }
        let mut w_med = vec![0.0; rows];
        for r in 0..rows {
            let src = stack.source_row(t, r);
            let m_hyp = level.m_code(r);
            let matches = data.mediator_code(t, src) == m_hyp;
            let (wm, _) =
                indicator_ratio(matches, props.g_med[src * arity + m_hyp as usize], opts.g_floor);
            w_med[r] = wm;
        }

        // Mediator-step regression: pseudo-outcome from the level above,
        // training restricted to rows whose observed mediator matches the
        // hypothetical value.
        let parent_outcome: Vec<f64> =
            (0..rows).map(|r| prev_d_trt[level.parent_row(r)]).collect();
        let med_filter: Vec<bool> = (0..rows)
            .map(|r| data.mediator_code(t, stack.source_row(t, r)) == level.m_code(r))
            .collect();
        let (q_med, q_trt, q_path) = match source {
            NuisanceSource::Fitted => {
                let med_design = level_design(data, &stack, t, HistoryKind::Mediator);
                let out_med = cross_fit_filtered(
                    &opts.learners.outcome_regression,
                    &med_design,
                    &parent_outcome,
                    &med_filter,
                    &row_fold,
                    partition.v(),
                    row_weight.as_deref(),
                    (y_lo, y_hi),
                )?;
                fallbacks += out_med.fallbacks;

                // Treatment-step and path regressions need the rolled
                // mediator-step scores; compute them after q_med below, so
                // here we only prepare the designs and filters.
                (out_med.predictions, Vec::new(), Vec::new())
            }
            NuisanceSource::Injected { law, tables, states } => {
                let q = injected_regressions(law, tables, states, &stack, t);
                (q.q_med, q.q_trt, q.q_path)
            }
        };

        // Roll the mediator step.
        let mut d_med = vec![f64::NAN; rows];
        for r in 0..rows {
            d_med[r] = gated(q_med[r], w_med[r], parent_outcome[r]);
        }

        // Treatment-arm filters over pooled rows.
        let prime_filter: Vec<bool> = (0..rows)
            .map(|r| data.treatment_code(t, stack.source_row(t, r)) == pair.primary[t - 1])
            .collect();
        let star_filter: Vec<bool> = (0..rows)
            .map(|r| data.treatment_code(t, stack.source_row(t, r)) == pair.reference[t - 1])
            .collect();
        // Path pseudo-outcome: indicator times the level-above score, with an
        // explicit branch so an undefined deeper value cannot leak through a
        // zero indicator.
        let path_outcome: Vec<f64> = (0..rows)
            .map(|r| {
                if med_filter[r] {
                    prev_d_path[level.parent_row(r)]
                } else {
                    0.0
                }
            })
            .collect();

        let (q_trt, q_path) = if let NuisanceSource::Fitted = source {
            let trt_design = level_design(data, &stack, t, HistoryKind::Treatment);
            let out_trt = cross_fit_filtered(
                &opts.learners.outcome_regression,
                &trt_design,
                &d_med,
                &prime_filter,
                &row_fold,
                partition.v(),
                row_weight.as_deref(),
                (y_lo, y_hi),
            )?;
            fallbacks += out_trt.fallbacks;
            let out_path = cross_fit_filtered(
                &opts.learners.path_regression,
                &trt_design,
                &path_outcome,
                &star_filter,
                &row_fold,
                partition.v(),
                row_weight.as_deref(),
                (0.0, 1.0),
            )?;
            fallbacks += out_path.fallbacks;
            (out_trt.predictions, out_path.predictions)
        } else {
            (q_trt, q_path)
        };

        // Roll the treatment step and the path recursion.
        let mut d_trt = vec![f64::NAN; rows];
        let mut d_path = vec![f64::NAN; rows];
        for r in 0..rows {
            let src = stack.source_row(t, r);
            d_trt[r] = gated(q_trt[r], w_prime[src], d_med[r]);
            d_path[r] = gated(q_path[r], w_star[src], path_outcome[r]);
        }

        if opts.keep_columns {
            kept[t - 1] = LevelColumns {
                q_med,
                q_trt,
                q_path,
                w_med,
                w_prime,
                w_star,
                d_med: d_med.clone(),
                d_trt: d_trt.clone(),
                d_path: d_path.clone(),
            };
        }
        prev_d_trt = d_trt;
        prev_d_path = d_path;
    }

    // Path-level aggregation over the level-one columns.
    let paths = stack.all_paths();
    let bad = prev_d_trt
        .iter()
        .chain(prev_d_path.iter())
        .filter(|v| !v.is_finite())
        .count();
    if bad > 0 {
        return Err(Error::numeric(format!(
            "{bad} non-finite influence contributions; propensity flooring failed"
        )));
    }

    let v = partition.v();
    let mut path_estimates = Vec::with_capacity(paths.len());
    for path in &paths {
        let mut phi = 0.0;
        let mut lambda = 0.0;
        for fold in 0..v as u16 {
            let mut sw = 0.0;
            let mut s_phi = 0.0;
            let mut s_lambda = 0.0;
            for src in 0..n {
                if partition.fold_of(src) != fold {
                    continue;
                }
                let w = weights.map_or(1.0, |w| w[src]);
                let r = stack.row_for_path(src, path);
                sw += w;
                s_phi += w * prev_d_trt[r];
                s_lambda += w * prev_d_path[r];
            }
            if sw <= 0.0 {
                return Err(Error::numeric(format!("fold {fold} carries no weight")));
            }
            phi += s_phi / sw;
            lambda += s_lambda / sw;
        }
        phi /= v as f64;
        lambda /= v as f64;
        path_estimates.push(PathEstimate {
            codes: path.0.clone(),
            labels: path.labels(data),
            phi,
            lambda,
        });
    }

    let theta: f64 = path_estimates.iter().map(|p| p.phi * p.lambda).sum();

    // Per-observation influence scores centered at the fold-averaged path
    // functionals.
    let mut scores_col = vec![0.0; n];
    for (path, est) in paths.iter().zip(&path_estimates) {
        for (src, s) in scores_col.iter_mut().enumerate() {
            let r = stack.row_for_path(src, path);
            *s += (prev_d_trt[r] - est.phi) * est.lambda + (prev_d_path[r] - est.lambda) * est.phi;
        }
    }
    let n_effective = weights.map_or(n as f64, |w| w.iter().sum());
    let mean_s = scores_col
        .iter()
        .enumerate()
        .map(|(i, &s)| weights.map_or(1.0, |w| w[i]) * s)
        .sum::<f64>()
        / n_effective;
    let var_s = scores_col
        .iter()
        .enumerate()
        .map(|(i, &s)| weights.map_or(1.0, |w| w[i]) * (s - mean_s) * (s - mean_s))
        .sum::<f64>()
        / n_effective;
    let se = (var_s / n_effective).sqrt();
    let z = normal_quantile(1.0 - opts.alpha / 2.0);

    Ok(ThetaEstimate {
        theta,
        se,
        ci: (theta - z * se, theta + z * se),
        alpha: opts.alpha,
        paths: path_estimates,
        scores: scores_col,
        n_effective,
        diagnostics: Diagnostics {
            truncated_weights: truncated,
            fallbacks,
            folds: opts.folds,
            seed: opts.seed,
        },
        columns: if opts.keep_columns { Some(kept) } else { None },
    })
}

/// Wald contrast of two runs sharing the fold partition, with the standard
/// error taken from the per-observation score differences.
fn contrast(
    name: &str,
    a: &ThetaEstimate,
    b: &ThetaEstimate,
    alpha: f64,
    weights: Option<&[f64]>,
) -> Result<ContrastEstimate> {
    if a.scores.len() != b.scores.len() {
        return Err(Error::validation("contrast runs disagree on the observation count"));
    }
    let n_eff = a.n_effective;
    let diffs: Vec<f64> = a.scores.iter().zip(&b.scores).map(|(x, y)| x - y).collect();
    let mean = diffs
        .iter()
        .enumerate()
        .map(|(i, &d)| weights.map_or(1.0, |w| w[i]) * d)
        .sum::<f64>()
        / n_eff;
    let var = diffs
        .iter()
        .enumerate()
        .map(|(i, &d)| weights.map_or(1.0, |w| w[i]) * (d - mean) * (d - mean))
        .sum::<f64>()
        / n_eff;
    let se = (var / n_eff).sqrt();
    let estimate = a.theta - b.theta;
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok(ContrastEstimate {
        name: name.to_string(),
        estimate,
        se,
        ci: (estimate - z * se, estimate + z * se),
    })
}

/// Run the three targets of the effect decomposition on shared folds and
/// learners and assemble the direct/indirect/total contrasts.
pub fn estimate_mediation(
    data: &LongitudinalDataset,
    pair: &InterventionPair,
    opts: &EstimatorOptions,
) -> Result<MediationReport> {
    let cross = estimate_theta(data, pair, opts, NuisanceSource::Fitted)?;
    let primary = estimate_theta(
        data,
        &InterventionPair::new(pair.primary.clone(), pair.primary.clone()),
        opts,
        NuisanceSource::Fitted,
    )?;
    let reference = estimate_theta(
        data,
        &InterventionPair::new(pair.reference.clone(), pair.reference.clone()),
        opts,
        NuisanceSource::Fitted,
    )?;
    let w = data.weights();
    let contrasts = vec![
        contrast("direct", &cross, &reference, opts.alpha, w)?,
        contrast("indirect", &primary, &cross, opts.alpha, w)?,
        contrast("total", &primary, &reference, opts.alpha, w)?,
    ];
    Ok(MediationReport {
        theta_cross: cross,
        theta_primary: primary,
        theta_reference: reference,
        contrasts,
    })
}

/// Evaluate the production per-trajectory score recursions for one source
/// row and path from kept estimator columns (test/diagnostic helper tying
/// the column engine to [`TrajectorySlices`]).
pub fn slices_for<'a>(
    stack: &PooledStack,
    columns: &'a [LevelColumns],
    data: &LongitudinalDataset,
    src: usize,
    path: &MediatorPath,
    bufs: &'a mut ScoreBufs,
) -> TrajectorySlices<'a> {
    let tau = columns.len();
    bufs.clear();
    let r1 = stack.row_for_path(src, path);
    for t in 1..=tau {
        let r = stack.ancestor_row(1, r1, t);
        let cols = &columns[t - 1];
        bufs.w_trt_prime.push(cols.w_prime[src]);
        bufs.w_trt_star.push(cols.w_star[src]);
        bufs.w_med.push(cols.w_med[r]);
        bufs.m_match.push(data.mediator_code(t, src) == path.0[t - 1]);
        bufs.q_med.push(cols.q_med[r]);
        bufs.q_trt.push(cols.q_trt[r]);
        bufs.q_path.push(cols.q_path[r]);
    }
    TrajectorySlices {
        t0: 1,
        w_trt_prime: &bufs.w_trt_prime,
        w_trt_star: &bufs.w_trt_star,
        w_med: &bufs.w_med,
        m_match: &bufs.m_match,
        q_med: &bufs.q_med,
        q_trt: &bufs.q_trt,
        q_path: &bufs.q_path,
        y: data.outcome()[src],
    }
}

/// Reusable buffers for [`slices_for`].
#[derive(Debug, Default)]
pub struct ScoreBufs {
    w_trt_prime: Vec<f64>,
    w_trt_star: Vec<f64>,
    w_med: Vec<f64>,
    m_match: Vec<bool>,
    q_med: Vec<f64>,
    q_trt: Vec<f64>,
    q_path: Vec<f64>,
}

impl ScoreBufs {
    pub fn new() -> ScoreBufs {
        ScoreBufs::default()
    }

    fn clear(&mut self) {
        self.w_trt_prime.clear();
        self.w_trt_star.clear();
        self.w_med.clear();
        self.m_match.clear();
        self.q_med.clear();
        self.q_trt.clear();
        self.q_path.clear();
    }
}
