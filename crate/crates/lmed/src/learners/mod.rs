//! Supervised learners for nuisance estimation.
//!
//! Every learner fits either a conditional mean of a real outcome or a
//! conditional distribution of a categorical outcome, from a design matrix of
//! raw feature values (numeric columns as-is, categorical columns as
//! dictionary codes). All fits accept optional row weights so the same code
//! path serves sampled data and exhaustively enumerated state spaces.

mod folds;
mod logistic;
mod ridge;
mod stratum;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use folds::FoldPartition;

/// Probabilities are kept inside `[EPS_PROB, 1 - EPS_PROB]`.
pub const EPS_PROB: f64 = 1e-6;

/// One feature column of a design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    /// Real-valued feature used as-is by linear learners.
    Numeric,
    /// Dictionary-coded categorical feature with the given number of levels;
    /// linear learners expand it to level indicators (first level dropped).
    Categorical { card: usize },
}

/// Row-major matrix of raw feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub feats: Vec<Feature>,
    data: Vec<f64>,
    rows: usize,
}

impl DesignMatrix {
    pub fn new(feats: Vec<Feature>) -> Self {
        DesignMatrix { feats, data: Vec::new(), rows: 0 }
    }

    pub fn with_capacity(feats: Vec<Feature>, rows: usize) -> Self {
        let width = feats.len();
        DesignMatrix { feats, data: Vec::with_capacity(rows * width), rows: 0 }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.feats.len());
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.feats.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.feats.len();
        &self.data[r * w..(r + 1) * w]
    }

    /// New matrix holding the selected rows (in the given order).
    pub fn select(&self, rows: &[usize]) -> DesignMatrix {
        let mut out = DesignMatrix::with_capacity(self.feats.clone(), rows.len());
        for &r in rows {
            out.push_row(self.row(r));
        }
        out
    }

    /// Append an extra feature column, returning a widened copy.
    pub fn with_extra_column(&self, feat: Feature, values: &[f64]) -> DesignMatrix {
        assert_eq!(values.len(), self.rows);
        let mut feats = self.feats.clone();
        feats.push(feat);
        let mut out = DesignMatrix::with_capacity(feats, self.rows);
        let mut buf = Vec::with_capacity(self.feats.len() + 1);
        for r in 0..self.rows {
            buf.clear();
            buf.extend_from_slice(self.row(r));
            buf.push(values[r]);
            out.push_row(&buf);
        }
        out
    }
}

/// Outcome of a fit: a real target or a coded categorical target.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Mean(&'a [f64]),
    Classes { codes: &'a [i64], card: usize },
}

impl Target<'_> {
    pub fn len(&self) -> usize {
        match self {
            Target::Mean(y) => y.len(),
            Target::Classes { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize], mean_buf: &mut Vec<f64>, code_buf: &mut Vec<i64>) {
        match self {
            Target::Mean(y) => {
                mean_buf.clear();
                mean_buf.extend(rows.iter().map(|&r| y[r]));
            }
            Target::Classes { codes, .. } => {
                code_buf.clear();
                code_buf.extend(rows.iter().map(|&r| codes[r]));
            }
        }
    }
}

/// Learner family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    /// Global (weighted) mean / class frequencies; ignores all features.
    Constant,
    /// Saturated lookup on the joint feature key with optional smoothing and
    /// a global fallback for unseen strata.
    StratumMean,
    /// Linear model with an L2 penalty on non-intercept coefficients.
    LinearRidge,
    /// Logistic model (IRLS) with an L2 penalty; one-vs-rest for more than
    /// two classes.
    LogisticRidge,
}

/// Learner family plus hyperparameters, serializable in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    /// L2 penalty for the ridge/logistic families.
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Smoothing strength for the stratum family: add-alpha counts for class
    /// frequencies, shrinkage toward the global mean for real outcomes.
    #[serde(default)]
    pub alpha: f64,
}

fn default_ridge() -> f64 {
    1e-4
}

impl LearnerSpec {
    pub fn constant() -> Self {
        LearnerSpec { kind: LearnerKind::Constant, ridge: 0.0, alpha: 0.0 }
    }

    pub fn stratum_mean(alpha: f64) -> Self {
        LearnerSpec { kind: LearnerKind::StratumMean, ridge: 0.0, alpha }
    }

    pub fn linear_ridge(ridge: f64) -> Self {
        LearnerSpec { kind: LearnerKind::LinearRidge, ridge, alpha: 0.0 }
    }

    pub fn logistic_ridge(ridge: f64) -> Self {
        LearnerSpec { kind: LearnerKind::LogisticRidge, ridge, alpha: 0.0 }
    }
}

/// A fitted model ready for prediction.
#[derive(Debug, Clone)]
pub enum FittedModel {
    ConstantMean { value: f64 },
    ConstantProb { dist: Vec<f64> },
    StratumMean(stratum::StratumMeanModel),
    StratumProb(stratum::StratumProbModel),
    LinearMean(ridge::LinearModel),
    LinearProb { models: Vec<ridge::LinearModel> },
    LogisticMean(logistic::LogisticModel),
    LogisticProb { models: Vec<logistic::LogisticModel> },
}

impl FittedModel {
    /// Predicted conditional mean for one row.
    pub fn predict_mean(&self, x: &DesignMatrix, r: usize) -> f64 {
        match self {
            FittedModel::ConstantMean { value } => *value,
            FittedModel::StratumMean(m) => m.predict(x.row(r)),
            FittedModel::LinearMean(m) => m.predict(x, r),
            FittedModel::LogisticMean(m) => m.predict(x, r),
            _ => panic!("mean prediction requested from a distribution model"),
        }
    }

    /// Predicted conditional class distribution for one row, clipped into
    /// `[EPS_PROB, 1 - EPS_PROB]` and renormalized.
    pub fn predict_dist(&self, x: &DesignMatrix, r: usize) -> Vec<f64> {
        let raw = match self {
            FittedModel::ConstantProb { dist } => dist.clone(),
            FittedModel::StratumProb(m) => m.predict(x.row(r)),
            FittedModel::LinearProb { models } => {
                models.iter().map(|m| m.predict(x, r)).collect()
            }
            FittedModel::LogisticProb { models } => {
                if models.len() == 1 {
                    let p = models[0].predict(x, r);
                    vec![1.0 - p, p]
                } else {
                    models.iter().map(|m| m.predict(x, r)).collect()
                }
            }
            _ => panic!("distribution prediction requested from a mean model"),
        };
        normalize_dist(raw)
    }
}

/// Clip a raw class distribution into `[EPS_PROB, 1 - EPS_PROB]` per entry and
/// renormalize to sum one, then clip once more so the bound holds exactly.
pub fn normalize_dist(mut dist: Vec<f64>) -> Vec<f64> {
    for p in dist.iter_mut() {
        *p = p.clamp(EPS_PROB, 1.0 - EPS_PROB);
    }
    let total: f64 = dist.iter().sum();
    for p in dist.iter_mut() {
        *p = (*p / total).clamp(EPS_PROB, 1.0 - EPS_PROB);
    }
    dist
}

/// Fit a learner on the given design/target/weights.
pub fn fit(
    spec: &LearnerSpec,
    x: &DesignMatrix,
    y: Target,
    w: Option<&[f64]>,
) -> Result<FittedModel> {
    if x.rows() == 0 || y.is_empty() {
        return Err(Error::numeric("cannot fit a learner on zero rows"));
    }
    if x.rows() != y.len() {
        return Err(Error::validation(format!(
            "design has {} rows but target has {}",
            x.rows(),
            y.len()
        )));
    }
    if let Some(w) = w {
        if w.len() != x.rows() {
            return Err(Error::validation("weight length does not match design rows"));
        }
        if w.iter().all(|&wi| wi <= 0.0) {
            return Err(Error::numeric("all fit weights are zero"));
        }
    }
    match (spec.kind, y) {
        (LearnerKind::Constant, Target::Mean(y)) => Ok(FittedModel::ConstantMean {
            value: weighted_mean(y, w),
        }),
        (LearnerKind::Constant, Target::Classes { codes, card }) => {
            Ok(FittedModel::ConstantProb { dist: class_frequencies(codes, card, w, spec.alpha) })
        }
        (LearnerKind::StratumMean, Target::Mean(y)) => Ok(FittedModel::StratumMean(
            stratum::StratumMeanModel::fit(x, y, w, spec.alpha),
        )),
        (LearnerKind::StratumMean, Target::Classes { codes, card }) => Ok(FittedModel::StratumProb(
            stratum::StratumProbModel::fit(x, codes, card, w, spec.alpha),
        )),
        (LearnerKind::LinearRidge, Target::Mean(y)) => {
            Ok(FittedModel::LinearMean(ridge::LinearModel::fit(x, y, w, spec.ridge)?))
        }
        (LearnerKind::LinearRidge, Target::Classes { codes, card }) => {
            let mut models = Vec::with_capacity(card);
            for k in 0..card {
                let yk: Vec<f64> =
                    codes.iter().map(|&c| if c == k as i64 { 1.0 } else { 0.0 }).collect();
                models.push(ridge::LinearModel::fit(x, &yk, w, spec.ridge)?);
            }
            Ok(FittedModel::LinearProb { models })
        }
        (LearnerKind::LogisticRidge, Target::Mean(y)) => {
            if y.iter().any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) {
                return Err(Error::validation(
                    "logistic-ridge on a real target requires values in [0, 1]",
                ));
            }
            Ok(FittedModel::LogisticMean(logistic::LogisticModel::fit(x, y, w, spec.ridge)?))
        }
        (LearnerKind::LogisticRidge, Target::Classes { codes, card }) => {
            let fit_indicator = |k: usize| -> Result<logistic::LogisticModel> {
                let yk: Vec<f64> =
                    codes.iter().map(|&c| if c == k as i64 { 1.0 } else { 0.0 }).collect();
                logistic::LogisticModel::fit(x, &yk, w, spec.ridge)
            };
            if card == 2 {
                Ok(FittedModel::LogisticProb { models: vec![fit_indicator(1)?] })
            } else {
                let models = (0..card).map(fit_indicator).collect::<Result<Vec<_>>>()?;
                Ok(FittedModel::LogisticProb { models })
            }
        }
    }
}

fn weighted_mean(y: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        None => y.iter().sum::<f64>() / y.len() as f64,
        Some(w) => {
            let num: f64 = y.iter().zip(w).map(|(yi, wi)| yi * wi).sum();
            let den: f64 = w.iter().sum();
            num / den
        }
    }
}

fn class_frequencies(codes: &[i64], card: usize, w: Option<&[f64]>, alpha: f64) -> Vec<f64> {
    let mut counts = vec![0.0; card];
    let mut total = 0.0;
    for (i, &c) in codes.iter().enumerate() {
        let wi = w.map_or(1.0, |w| w[i]);
        counts[c as usize] += wi;
        total += wi;
    }
    counts
        .iter()
        .map(|&c| (c + alpha) / (total + alpha * card as f64))
        .collect()
}

/// Out-of-fold predictions for every prediction row.
#[derive(Debug, Clone)]
pub enum Predictions {
    Mean(Vec<f64>),
    /// `dist[row][class]`.
    Prob(Vec<Vec<f64>>),
}

/// Cross-fitted prediction: for each fold `v`, fit on the training rows whose
/// fold differs from `v` and predict the prediction rows with fold `v`. With a
/// single fold this degenerates to fit-on-all / predict-on-all.
#[allow(clippy::too_many_arguments)]
pub fn cross_fit(
    spec: &LearnerSpec,
    x_train: &DesignMatrix,
    y: Target,
    w: Option<&[f64]>,
    train_fold: &[u16],
    x_pred: &DesignMatrix,
    pred_fold: &[u16],
    v: usize,
) -> Result<Predictions> {
    debug_assert_eq!(train_fold.len(), x_train.rows());
    debug_assert_eq!(pred_fold.len(), x_pred.rows());
    let is_prob = matches!(y, Target::Classes { .. });
    let card = match y {
        Target::Classes { card, .. } => card,
        _ => 0,
    };
    let mut mean_out = vec![f64::NAN; x_pred.rows()];
    let mut prob_out = vec![Vec::new(); if is_prob { x_pred.rows() } else { 0 }];

    let mut mean_buf = Vec::new();
    let mut code_buf = Vec::new();
    for fold in 0..v as u16 {
        let train_rows: Vec<usize> = if v == 1 {
            (0..x_train.rows()).collect()
        } else {
            (0..x_train.rows()).filter(|&r| train_fold[r] != fold).collect()
        };
        if train_rows.is_empty() {
            return Err(Error::numeric(format!(
                "no training rows available outside fold {fold}"
            )));
        }
        let xt = x_train.select(&train_rows);
        y.select(&train_rows, &mut mean_buf, &mut code_buf);
        let yt = match y {
            Target::Mean(_) => Target::Mean(&mean_buf),
            Target::Classes { .. } => Target::Classes { codes: &code_buf, card },
        };
        let wt: Option<Vec<f64>> = w.map(|w| train_rows.iter().map(|&r| w[r]).collect());
        let model = fit(spec, &xt, yt, wt.as_deref())?;
        for r in 0..x_pred.rows() {
            if pred_fold[r] == fold {
                if is_prob {
                    prob_out[r] = model.predict_dist(x_pred, r);
                } else {
                    mean_out[r] = model.predict_mean(x_pred, r);
                }
            }
        }
    }
    Ok(if is_prob { Predictions::Prob(prob_out) } else { Predictions::Mean(mean_out) })
}

/// Pick the candidate with the smallest cross-validated loss (squared error
/// for real targets, negative log-likelihood for categorical ones) using the
/// given fold assignment. Ties keep the earliest candidate.
pub fn select_learner(
    candidates: &[LearnerSpec],
    x: &DesignMatrix,
    y: Target,
    w: Option<&[f64]>,
    fold: &[u16],
    v: usize,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::validation("no learner candidates supplied"));
    }
    if candidates.len() == 1 {
        return Ok(0);
    }
    let mut best = 0usize;
    let mut best_loss = f64::INFINITY;
    for (i, cand) in candidates.iter().enumerate() {
        let preds = cross_fit(cand, x, y, w, fold, x, fold, v)?;
        let mut loss = 0.0;
        let mut total_w = 0.0;
        match (&preds, y) {
            (Predictions::Mean(p), Target::Mean(yv)) => {
                for r in 0..yv.len() {
                    let wi = w.map_or(1.0, |w| w[r]);
                    loss += wi * (p[r] - yv[r]).powi(2);
                    total_w += wi;
                }
            }
            (Predictions::Prob(p), Target::Classes { codes, .. }) => {
                for r in 0..codes.len() {
                    let wi = w.map_or(1.0, |w| w[r]);
                    loss -= wi * p[r][codes[r] as usize].ln();
                    total_w += wi;
                }
            }
            _ => unreachable!("prediction type follows target type"),
        }
        let loss = loss / total_w;
        if loss < best_loss {
            best_loss = loss;
            best = i;
        }
    }
    Ok(best)
}
