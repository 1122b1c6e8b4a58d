//! Nuisance estimation on pooled datasets: cross-fitted propensity models,
//! indicator-gated inverse-probability ratios, and the filtered pseudo-outcome
//! regressions consumed by the sequential estimator.
//!
//! Everything here operates on *row sets*: source rows for propensities
//! (whose predictions do not depend on hypothetical mediator values) and
//! pooled level rows for the regressions (whose predictors include the
//! hypothetical suffix). Rows whose required history contains missing values
//! are never shown to a learner; their predictions are `NaN` and all of their
//! downstream uses are cut off by zero indicator numerators.

use serde::{Deserialize, Serialize};

use crate::data::{ColumnRef, HistoryKind, LongitudinalDataset, PooledStack, Role, MISSING_CODE};
use crate::error::{Error, Result};
use crate::learners::{
    fit, select_learner, DesignMatrix, Feature, FoldPartition, LearnerSpec, Target,
};

pub use crate::oracle::InterventionPair;

/// Default lower truncation bound for propensities entering a denominator.
pub const DEFAULT_G_FLOOR: f64 = 0.01;

/// Learner candidates per nuisance family. A single candidate is used as-is;
/// multiple candidates trigger per-fit cross-validated selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyLearners {
    pub treatment_propensity: Vec<LearnerSpec>,
    pub mediator_propensity: Vec<LearnerSpec>,
    /// Outcome-scale sequential regressions (the mediator- and
    /// treatment-step families).
    pub outcome_regression: Vec<LearnerSpec>,
    /// Path-probability sequential regressions (clipped to `[0, 1]`).
    pub path_regression: Vec<LearnerSpec>,
}

impl Default for FamilyLearners {
    fn default() -> Self {
        FamilyLearners {
            treatment_propensity: vec![LearnerSpec::logistic_ridge(1e-4)],
            mediator_propensity: vec![LearnerSpec::logistic_ridge(1e-4)],
            outcome_regression: vec![LearnerSpec::linear_ridge(1e-4)],
            path_regression: vec![LearnerSpec::linear_ridge(1e-4)],
        }
    }
}

/// Check a regime pair against a dataset: one treatment code per time, in
/// range, and never the censored level.
pub fn validate_regimes(data: &LongitudinalDataset, pair: &InterventionPair) -> Result<()> {
    let tau = data.schema().tau();
    if pair.primary.len() != tau || pair.reference.len() != tau {
        return Err(Error::validation(format!(
            "regimes must specify exactly {tau} treatment values"
        )));
    }
    for t in 1..=tau {
        let card = data.treatment_levels(t).len() as i64;
        for (which, value) in
            [("primary", pair.primary[t - 1]), ("reference", pair.reference[t - 1])]
        {
            if !(0..card).contains(&value) {
                return Err(Error::validation(format!(
                    "{which} regime value {value} at time {t} is outside the treatment support"
                )));
            }
            if data.censored_code(t) == Some(value) {
                return Err(Error::validation(format!(
                    "{which} regime selects the censored level at time {t}"
                )));
            }
        }
    }
    Ok(())
}

/// Feature type of a dataset column: categorical columns carry their
/// dictionary cardinality, numeric columns are used as-is.
pub fn feature_of(data: &LongitudinalDataset, c: ColumnRef) -> Feature {
    match c.role {
        Role::Treatment => Feature::Categorical { card: data.treatment_levels(c.time).len() },
        Role::Mediator => Feature::Categorical { card: data.mediator_arity(c.time) },
        _ => Feature::Numeric,
    }
}

/// A design matrix plus the per-row flag of whether every feature is
/// observed (rows with missing features never reach a learner).
#[derive(Debug, Clone)]
pub struct PooledDesign {
    pub x: DesignMatrix,
    pub predictable: Vec<bool>,
}

/// Design over *source* rows for one history (no hypothetical suffix).
pub fn history_design(
    data: &LongitudinalDataset,
    kind: HistoryKind,
    t: usize,
) -> PooledDesign {
    let cols = data.schema().history_columns(kind, t);
    let feats: Vec<Feature> = cols.iter().map(|&c| feature_of(data, c)).collect();
    let mut x = DesignMatrix::with_capacity(feats, data.n());
    let mut predictable = Vec::with_capacity(data.n());
    let mut buf = vec![0.0; cols.len()];
    for row in 0..data.n() {
        for (i, &c) in cols.iter().enumerate() {
            buf[i] = data.value(c, row);
        }
        predictable.push(buf.iter().all(|v| v.is_finite()));
        x.push_row(&buf);
    }
    PooledDesign { x, predictable }
}

/// Design over the pooled rows of level `t`: the hypothetical suffix
/// `(m_t, ..., m_tau)` first, then the requested history of the underlying
/// source row.
pub fn level_design(
    data: &LongitudinalDataset,
    stack: &PooledStack,
    t: usize,
    kind: HistoryKind,
) -> PooledDesign {
    let tau = data.schema().tau();
    let cols = data.schema().history_columns(kind, t);
    let mut feats: Vec<Feature> = (t..=tau)
        .map(|s| Feature::Categorical { card: data.mediator_arity(s) })
        .collect();
    feats.extend(cols.iter().map(|&c| feature_of(data, c)));
    let rows = stack.level(t).rows;
    let mut x = DesignMatrix::with_capacity(feats, rows);
    let mut predictable = Vec::with_capacity(rows);
    let width = (tau - t + 1) + cols.len();
    let mut buf = vec![0.0; width];
    for r in 0..rows {
        for (i, s) in (t..=tau).enumerate() {
            buf[i] = stack.suffix_code(t, r, s) as f64;
        }
        let src = stack.source_row(t, r);
        for (i, &c) in cols.iter().enumerate() {
            buf[tau - t + 1 + i] = data.value(c, src);
        }
        predictable.push(buf.iter().all(|v| v.is_finite()));
        x.push_row(&buf);
    }
    PooledDesign { x, predictable }
}

/// Indicator-gated inverse-probability ratio. Returns the ratio and whether
/// the floor truncated the denominator (only possible on a matching row).
pub fn indicator_ratio(matches: bool, g: f64, floor: f64) -> (f64, bool) {
    if !matches {
        return (0.0, false);
    }
    debug_assert!(g.is_finite(), "propensity for a matching row must be observed");
    let truncated = g < floor;
    (1.0 / g.max(floor), truncated)
}

/// Per-source-row propensity predictions at one time point. Entries are
/// `NaN` where the corresponding node is unobserved (after censoring).
#[derive(Debug, Clone)]
pub struct PropensityColumns {
    /// Predicted probability of the primary regime's treatment value.
    pub g_prime: Vec<f64>,
    /// Predicted probability of the reference regime's treatment value.
    pub g_star: Vec<f64>,
    /// Predicted mediator distribution, `src * arity + m`.
    pub g_med: Vec<f64>,
    pub arity: usize,
}

/// Fit treatment and mediator assignment models at time `t` on unexpanded
/// rows, cross-fitted over the partition, and evaluate them per source row.
pub fn cross_fit_propensities(
    data: &LongitudinalDataset,
    pair: &InterventionPair,
    t: usize,
    partition: &FoldPartition,
    learners: &FamilyLearners,
) -> Result<PropensityColumns> {
    let n = data.n();
    let trt_design = history_design(data, HistoryKind::Treatment, t);
    let med_design = history_design(data, HistoryKind::Mediator, t);
    let trt_card = data.treatment_levels(t).len();
    let arity = data.mediator_arity(t);

    let trt_codes: Vec<i64> = (0..n).map(|r| data.treatment_code(t, r)).collect();
    let med_codes: Vec<i64> = (0..n).map(|r| data.mediator_code(t, r)).collect();

    let mut g_prime = vec![f64::NAN; n];
    let mut g_star = vec![f64::NAN; n];
    let mut g_med = vec![f64::NAN; n * arity];

    let fit_family = |candidates: &[LearnerSpec],
                      design: &PooledDesign,
                      codes: &[i64],
                      card: usize,
                      out: &mut dyn FnMut(usize, Vec<f64>)|
     -> Result<()> {
        for v in 0..partition.v() as u16 {
            let train: Vec<usize> = (0..n)
                .filter(|&r| {
                    (partition.v() == 1 || partition.fold_of(r) != v)
                        && codes[r] != MISSING_CODE
                        && design.predictable[r]
                })
                .collect();
            if train.is_empty() {
                return Err(Error::numeric(format!(
                    "no rows with an observed value to fit an assignment model at time {t}"
                )));
            }
            let xt = design.x.select(&train);
            let ct: Vec<i64> = train.iter().map(|&r| codes[r]).collect();
            let wt: Option<Vec<f64>> =
                data.weights().map(|w| train.iter().map(|&r| w[r]).collect());
            let spec = choose_learner(
                candidates,
                &xt,
                Target::Classes { codes: &ct, card },
                wt.as_deref(),
            )?;
            let model = fit(&spec, &xt, Target::Classes { codes: &ct, card }, wt.as_deref())?;
            for r in 0..n {
                if partition.fold_of(r) == v && codes[r] != MISSING_CODE && design.predictable[r]
                {
                    out(r, model.predict_dist(&design.x, r));
                }
            }
        }
        Ok(())
    };

    fit_family(
        &learners.treatment_propensity,
        &trt_design,
        &trt_codes,
        trt_card,
        &mut |r, dist| {
            g_prime[r] = dist[pair.primary[t - 1] as usize];
            g_star[r] = dist[pair.reference[t - 1] as usize];
        },
    )?;
    fit_family(&learners.mediator_propensity, &med_design, &med_codes, arity, &mut |r, dist| {
        g_med[r * arity..(r + 1) * arity].copy_from_slice(&dist);
    })?;

    Ok(PropensityColumns { g_prime, g_star, g_med, arity })
}

/// Cross-fitted filtered pseudo-outcome regression over pooled rows.
#[derive(Debug, Clone)]
pub struct CrossFitOutcome {
    /// Per pooled row: the (clipped) prediction, `NaN` where the row's
    /// history is unobserved.
    pub predictions: Vec<f64>,
    /// Number of folds whose filtered training subset was empty and fell
    /// back to the unfiltered fit with the filter added as a predictor.
    pub fallbacks: usize,
}

/// Regress `outcomes` on the design within the filtered training rows of
/// each fold's training split, and predict every predictable pooled row of
/// the matching fold. `filter` marks training eligibility (the subset
/// condition); predictions are clipped to `clip`.
#[allow(clippy::too_many_arguments)]
pub fn cross_fit_filtered(
    candidates: &[LearnerSpec],
    design: &PooledDesign,
    outcomes: &[f64],
    filter: &[bool],
    row_fold: &[u16],
    v: usize,
    weights: Option<&[f64]>,
    clip: (f64, f64),
) -> Result<CrossFitOutcome> {
    let rows = design.x.rows();
    debug_assert_eq!(outcomes.len(), rows);
    debug_assert_eq!(filter.len(), rows);
    debug_assert_eq!(row_fold.len(), rows);
    let mut predictions = vec![f64::NAN; rows];
    let mut fallbacks = 0usize;

    for fold in 0..v as u16 {
        let train: Vec<usize> = (0..rows)
            .filter(|&r| {
                (v == 1 || row_fold[r] != fold) && filter[r] && design.predictable[r]
            })
            .collect();
        debug_assert!(
            train.iter().all(|&r| outcomes[r].is_finite()),
            "filtered training outcomes must be observed"
        );
        let predict_rows: Vec<usize> = (0..rows)
            .filter(|&r| row_fold[r] == fold && design.predictable[r])
            .collect();
        if predict_rows.is_empty() {
            continue;
        }
        if train.is_empty() {
            // Fallback: train on all usable fold-training rows with the
            // filter indicator appended as a predictor, and predict with the
            // indicator set to one (the value the subset would have had).
            fallbacks += 1;
            let unfiltered: Vec<usize> = (0..rows)
                .filter(|&r| {
                    (v == 1 || row_fold[r] != fold)
                        && design.predictable[r]
                        && outcomes[r].is_finite()
                })
                .collect();
            if unfiltered.is_empty() {
                return Err(Error::numeric(format!(
                    "no usable training rows at all outside fold {fold}"
                )));
            }
            let ind: Vec<f64> = (0..rows).map(|r| if filter[r] { 1.0 } else { 0.0 }).collect();
            let wide = design.x.with_extra_column(Feature::Numeric, &ind);
            let xt = wide.select(&unfiltered);
            let yt: Vec<f64> = unfiltered.iter().map(|&r| outcomes[r]).collect();
            let wt: Option<Vec<f64>> =
                weights.map(|w| unfiltered.iter().map(|&r| w[r]).collect());
            let spec = choose_learner(candidates, &xt, Target::Mean(&yt), wt.as_deref())?;
            let model = fit(&spec, &xt, Target::Mean(&yt), wt.as_deref())?;
            let ones = vec![1.0; rows];
            let wide_pred = design.x.with_extra_column(Feature::Numeric, &ones);
            for &r in &predict_rows {
                predictions[r] = model.predict_mean(&wide_pred, r).clamp(clip.0, clip.1);
            }
            continue;
        }
        let xt = design.x.select(&train);
        let yt: Vec<f64> = train.iter().map(|&r| outcomes[r]).collect();
        let wt: Option<Vec<f64>> = weights.map(|w| train.iter().map(|&r| w[r]).collect());
        let spec = choose_learner(candidates, &xt, Target::Mean(&yt), wt.as_deref())?;
        let model = fit(&spec, &xt, Target::Mean(&yt), wt.as_deref())?;
        for &r in &predict_rows {
            predictions[r] = model.predict_mean(&design.x, r).clamp(clip.0, clip.1);
        }
    }
    Ok(CrossFitOutcome { predictions, fallbacks })
}

/// Pick a learner for one fit: a single candidate is used directly; several
/// candidates are compared by a deterministic two-fold cross-validated loss
/// on the training subset (falling back to the first candidate when the
/// subset is too small to split).
fn choose_learner(
    candidates: &[LearnerSpec],
    x: &DesignMatrix,
    y: Target,
    w: Option<&[f64]>,
) -> Result<LearnerSpec> {
    if candidates.is_empty() {
        return Err(Error::validation("no learner candidates configured"));
    }
    if candidates.len() == 1 || x.rows() < 4 {
        return Ok(candidates[0]);
    }
    let inner_fold: Vec<u16> = (0..x.rows()).map(|r| (r % 2) as u16).collect();
    let winner = select_learner(candidates, x, y, w, &inner_fold, 2)?;
    Ok(candidates[winner])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::NodeSchema;

    fn schema_tau1(censoring: bool) -> NodeSchema {
        NodeSchema::new(
            1,
            vec![vec!["l1".into()]],
            vec!["a1".into()],
            vec![vec!["z1".into()]],
            vec!["m1".into()],
            "y".into(),
            Vec::new(),
            Vec::new(),
            censoring.then(|| crate::data::Censoring { censored_level: "c".into() }),
        )
        .unwrap()
    }

    fn pair_10() -> InterventionPair {
        InterventionPair::new(vec![1], vec![0])
    }

    #[test]
    fn saturated_propensity_recovers_empirical_frequencies() {
        // Stratum l1=0 has 4 rows, 3 of them treated: g-hat must be 0.75 and
        // the matching-row ratio 4/3.
        let csv = "l1,a1,z1,m1,y\n0,1,0,0,1\n0,1,1,0,0\n0,1,0,1,1\n0,0,1,1,0\n1,0,0,0,1\n1,1,1,1,0\n";
        let data = LongitudinalDataset::from_csv_reader(&schema_tau1(false), csv.as_bytes())
            .unwrap()
            .validate()
            .unwrap();
        let learners = FamilyLearners {
            treatment_propensity: vec![LearnerSpec::stratum_mean(0.0)],
            mediator_propensity: vec![LearnerSpec::stratum_mean(0.0)],
            ..Default::default()
        };
        let cols = cross_fit_propensities(
            &data,
            &pair_10(),
            1,
            &FoldPartition::single(data.n()),
            &learners,
        )
        .unwrap();
        assert!((cols.g_prime[0] - 0.75).abs() < 1e-9, "{}", cols.g_prime[0]);
        let (ratio, truncated) = indicator_ratio(data.treatment_code(1, 0) == 1, cols.g_prime[0], 0.01);
        assert!((ratio - 4.0 / 3.0).abs() < 1e-9);
        assert!(!truncated);
        // Non-matching row: ratio zero regardless of the fitted value.
        let (zero, _) = indicator_ratio(data.treatment_code(1, 3) == 1, cols.g_prime[3], 0.01);
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn ratio_mean_is_one_within_training_strata_for_saturated_fits() {
        let csv = "l1,a1,z1,m1,y\n0,1,0,0,1\n0,1,1,0,0\n0,0,0,1,1\n0,0,1,1,0\n1,1,0,0,1\n1,1,1,1,0\n1,1,0,1,1\n1,0,1,0,0\n";
        let data = LongitudinalDataset::from_csv_reader(&schema_tau1(false), csv.as_bytes())
            .unwrap()
            .validate()
            .unwrap();
        let learners = FamilyLearners {
            treatment_propensity: vec![LearnerSpec::stratum_mean(0.0)],
            mediator_propensity: vec![LearnerSpec::stratum_mean(0.0)],
            ..Default::default()
        };
        let cols = cross_fit_propensities(
            &data,
            &pair_10(),
            1,
            &FoldPartition::single(data.n()),
            &learners,
        )
        .unwrap();
        for stratum in [0.0, 1.0] {
            let rows: Vec<usize> =
                (0..data.n()).filter(|&r| data.value(crate::data::ColumnRef { role: Role::Covariate, time: 1, slot: 0 }, r) == stratum).collect();
            let mean: f64 = rows
                .iter()
                .map(|&r| indicator_ratio(data.treatment_code(1, r) == 1, cols.g_prime[r], 0.001).0)
                .sum::<f64>()
                / rows.len() as f64;
            assert!((mean - 1.0).abs() < 1e-9, "stratum {stratum}: {mean}");
        }
    }

    #[test]
    fn censored_rows_have_nan_propensities_and_zero_ratios() {
        let csv = "l1,a1,z1,m1,y\n0,1,0,0,1\n0,c,,,0.5\n1,0,1,1,0\n1,1,0,0,1\n";
        let data = LongitudinalDataset::from_csv_reader(&schema_tau1(true), csv.as_bytes())
            .unwrap()
            .validate()
            .unwrap();
        let learners = FamilyLearners {
            treatment_propensity: vec![LearnerSpec::stratum_mean(0.5)],
            mediator_propensity: vec![LearnerSpec::stratum_mean(0.5)],
            ..Default::default()
        };
        let pair = InterventionPair::new(
            vec![data.treatment_code_of_label(1, "1").unwrap()],
            vec![data.treatment_code_of_label(1, "0").unwrap()],
        );
        validate_regimes(&data, &pair).unwrap();
        let cols =
            cross_fit_propensities(&data, &pair, 1, &FoldPartition::single(data.n()), &learners)
                .unwrap();
        // Row 1 is censored at t=1: A_1 is observed (the censored level), so
        // treatment propensities exist, but M_1 is missing.
        assert!(cols.g_prime[1].is_finite());
        assert!(cols.g_med[1 * cols.arity].is_nan());
        let code = data.treatment_code(1, 1);
        let censored = data.censored_code(1).unwrap();
        assert_eq!(code, censored);
        let (rp, _) = indicator_ratio(code == pair.primary[0], cols.g_prime[1], 0.01);
        let (rs, _) = indicator_ratio(code == pair.reference[0], cols.g_star[1], 0.01);
        assert_eq!((rp, rs), (0.0, 0.0));
    }

    #[test]
    fn regime_validation_rejects_censored_and_out_of_range_levels() {
        let csv = "l1,a1,z1,m1,y\n0,1,0,0,1\n0,c,,,0.5\n1,0,1,1,0\n";
        let data = LongitudinalDataset::from_csv_reader(&schema_tau1(true), csv.as_bytes())
            .unwrap()
            .validate()
            .unwrap();
        let censored = data.censored_code(1).unwrap();
        assert!(validate_regimes(&data, &InterventionPair::new(vec![censored], vec![0])).is_err());
        assert!(validate_regimes(&data, &InterventionPair::new(vec![9], vec![0])).is_err());
    }

    #[test]
    fn cross_fit_filtered_clips_and_respects_folds() {
        // Two folds; constant learner: fold-0 predictions are the fold-1
        // filtered outcome mean and vice versa.
        let feats = vec![Feature::Numeric];
        let mut x = DesignMatrix::new(feats);
        for _ in 0..8 {
            x.push_row(&[0.0]);
        }
        let design = PooledDesign { x, predictable: vec![true; 8] };
        let outcomes = [1.0, 100.0, 1.0, 1.0, 3.0, 3.0, 3.0, 100.0];
        let filter = [true, false, true, true, true, true, true, false];
        let fold = [0u16, 0, 0, 0, 1, 1, 1, 1];
        let out = cross_fit_filtered(
            &[LearnerSpec::constant()],
            &design,
            &outcomes,
            &filter,
            &fold,
            2,
            None,
            (0.0, 2.5),
        )
        .unwrap();
        assert_eq!(out.fallbacks, 0);
        // Fold-0 rows predicted from fold-1 training (filtered mean 3.0,
        // clipped to 2.5); fold-1 rows from fold-0 (mean 1.0).
        assert!(out.predictions[..4].iter().all(|&p| (p - 2.5).abs() < 1e-12));
        assert!(out.predictions[4..].iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn empty_filtered_subset_falls_back_with_indicator_predictor() {
        // Fold 1's training split (fold-0 rows) has no filtered rows, so the
        // fallback trains on all fold-0 rows with the indicator appended.
        let mut x = DesignMatrix::new(vec![Feature::Numeric]);
        for _ in 0..6 {
            x.push_row(&[0.0]);
        }
        let design = PooledDesign { x, predictable: vec![true; 6] };
        let outcomes = [2.0, 2.0, 2.0, 5.0, 5.0, 5.0];
        let filter = [false, false, false, true, true, true];
        let fold = [0u16, 0, 0, 1, 1, 1];
        let out = cross_fit_filtered(
            &[LearnerSpec::constant()],
            &design,
            &outcomes,
            &filter,
            &fold,
            2,
            None,
            (f64::NEG_INFINITY, f64::INFINITY),
        )
        .unwrap();
        assert_eq!(out.fallbacks, 1);
        // Fold-0 rows: trained on fold-1 filtered rows normally (mean 5).
        assert!(out.predictions[..3].iter().all(|&p| (p - 5.0).abs() < 1e-12));
        // Fold-1 rows: fallback constant over fold-0 outcomes (mean 2).
        assert!(out.predictions[3..].iter().all(|&p| (p - 2.0).abs() < 1e-12));
    }

    #[test]
    fn unpredictable_rows_stay_nan() {
        let mut x = DesignMatrix::new(vec![Feature::Numeric]);
        x.push_row(&[0.0]);
        x.push_row(&[f64::NAN]);
        let design = PooledDesign { x, predictable: vec![true, false] };
        let out = cross_fit_filtered(
            &[LearnerSpec::constant()],
            &design,
            &[1.0, f64::NAN],
            &[true, false],
            &[0, 0],
            1,
            None,
            (0.0, 1.0),
        )
        .unwrap();
        assert!(out.predictions[0].is_finite());
        assert!(out.predictions[1].is_nan());
    }
}
