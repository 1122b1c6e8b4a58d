//! In-memory longitudinal dataset: column storage, CSV ingestion with
//! dictionary encoding of categorical columns, and structural validation.

use std::io::Read;

use crate::data::schema::{canonical_label, sorted_levels, ColumnRef, NodeSchema, Role};
use crate::error::{Error, Result};

/// Sentinel code for a missing categorical value.
pub const MISSING_CODE: i64 = -1;

/// Columnar longitudinal dataset bound to a [`NodeSchema`].
///
/// Numeric columns (covariates, confounders, outcome) store `f64` with `NaN`
/// as the missing sentinel. Categorical columns (treatment, mediator) store
/// dictionary codes `0..levels.len()` with `-1` as the missing sentinel;
/// the dictionaries are deterministic (declared support if given, otherwise
/// sorted observed values).
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    schema: NodeSchema,
    n: usize,
    covariates: Vec<Vec<Vec<f64>>>,
    confounders: Vec<Vec<Vec<f64>>>,
    treatments: Vec<Vec<i64>>,
    mediators: Vec<Vec<i64>>,
    outcome: Vec<f64>,
    treatment_level_names: Vec<Vec<String>>,
    mediator_level_names: Vec<Vec<String>>,
    /// Optional per-row probability weights (used by the exhaustive-state
    /// estimation mode where each row is a whole trajectory with its mass).
    weights: Option<Vec<f64>>,
}

impl LongitudinalDataset {
    /// Assemble a dataset from already-encoded columns. Level dictionaries
    /// must be consistent with the stored codes; `validate` checks the rest.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        schema: NodeSchema,
        covariates: Vec<Vec<Vec<f64>>>,
        confounders: Vec<Vec<Vec<f64>>>,
        treatments: Vec<Vec<i64>>,
        mediators: Vec<Vec<i64>>,
        outcome: Vec<f64>,
        treatment_level_names: Vec<Vec<String>>,
        mediator_level_names: Vec<Vec<String>>,
        weights: Option<Vec<f64>>,
    ) -> Self {
        let n = outcome.len();
        LongitudinalDataset {
            schema,
            n,
            covariates,
            confounders,
            treatments,
            mediators,
            outcome,
            treatment_level_names,
            mediator_level_names,
            weights,
        }
    }

    /// Read a dataset from CSV text with a header row naming every schema
    /// column. Unknown extra columns are ignored; missing values are empty
    /// cells (or the literal `NA`). The decoded dataset is [`validate`]d, so
    /// every error names the offending row.
    ///
    /// [`validate`]: LongitudinalDataset::validate
    pub fn from_csv_reader<R: Read>(schema: &NodeSchema, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::validation(format!("CSV header: {e}")))?
            .clone();
        let find = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::validation(format!("CSV is missing column `{name}`")))
        };

        let tau = schema.tau();
        let mut cov_idx = Vec::with_capacity(tau);
        let mut con_idx = Vec::with_capacity(tau);
        let mut trt_idx = Vec::with_capacity(tau);
        let mut med_idx = Vec::with_capacity(tau);
        for t in 1..=tau {
            cov_idx.push(
                schema
                    .covariate_names(t)
                    .iter()
                    .map(|c| find(c))
                    .collect::<Result<Vec<_>>>()?,
            );
            con_idx.push(
                schema
                    .confounder_names(t)
                    .iter()
                    .map(|c| find(c))
                    .collect::<Result<Vec<_>>>()?,
            );
            trt_idx.push(find(schema.treatment_name(t))?);
            med_idx.push(find(schema.mediator_name(t))?);
        }
        let out_idx = find(schema.outcome_name())?;

        let mut covariates: Vec<Vec<Vec<f64>>> =
            cov_idx.iter().map(|v| vec![Vec::new(); v.len()]).collect();
        let mut confounders: Vec<Vec<Vec<f64>>> =
            con_idx.iter().map(|v| vec![Vec::new(); v.len()]).collect();
        let mut treatment_raw: Vec<Vec<Option<String>>> = vec![Vec::new(); tau];
        let mut mediator_raw: Vec<Vec<Option<String>>> = vec![Vec::new(); tau];
        let mut outcome: Vec<f64> = Vec::new();

        let parse_numeric = |cell: &str, name: &str, row: usize| -> Result<f64> {
            if cell.is_empty() || cell == "NA" {
                return Ok(f64::NAN);
            }
            cell.parse::<f64>().map_err(|_| {
                Error::validation(format!("row {row}: column `{name}` has non-numeric value `{cell}`"))
            })
        };

        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::validation(format!("CSV row {row}: {e}")))?;
            for t in 1..=tau {
                for (slot, &idx) in cov_idx[t - 1].iter().enumerate() {
                    let name = &schema.covariate_names(t)[slot];
                    covariates[t - 1][slot].push(parse_numeric(&record[idx], name, row)?);
                }
                for (slot, &idx) in con_idx[t - 1].iter().enumerate() {
                    let name = &schema.confounder_names(t)[slot];
                    confounders[t - 1][slot].push(parse_numeric(&record[idx], name, row)?);
                }
                let trt_cell = record[trt_idx[t - 1]].to_string();
                treatment_raw[t - 1].push(if trt_cell.is_empty() || trt_cell == "NA" {
                    None
                } else {
                    Some(canonical_label(&trt_cell))
                });
                let med_cell = record[med_idx[t - 1]].to_string();
                mediator_raw[t - 1].push(if med_cell.is_empty() || med_cell == "NA" {
                    None
                } else {
                    Some(canonical_label(&med_cell))
                });
            }
            outcome.push(parse_numeric(&record[out_idx], schema.outcome_name(), row)?);
        }

        // Build level dictionaries first (declared supports win; otherwise the
        // sorted observed values), then encode against them. A declared
        // censored level is always representable even if nobody was censored
        // at that time in this file.
        let build_levels = |raw: &[Vec<Option<String>>],
                            declared: &dyn Fn(usize) -> Option<Vec<String>>,
                            extra: Option<&str>,
                            what: &str|
         -> Result<Vec<Vec<String>>> {
            let mut levels_all = Vec::with_capacity(tau);
            for t in 1..=tau {
                let levels = match declared(t) {
                    Some(d) => d,
                    None => {
                        let mut observed: Vec<String> =
                            raw[t - 1].iter().flatten().cloned().collect();
                        if let Some(label) = extra {
                            observed.push(label.to_string());
                        }
                        sorted_levels(observed)
                    }
                };
                if levels.is_empty() {
                    return Err(Error::validation(format!(
                        "{what} at time {t} has no observed values and no declared support"
                    )));
                }
                levels_all.push(levels);
            }
            Ok(levels_all)
        };
        let encode = |raw: &[Vec<Option<String>>],
                      levels_all: &[Vec<String>],
                      what: &str|
         -> Result<Vec<Vec<i64>>> {
            (1..=tau)
                .map(|t| {
                    let levels = &levels_all[t - 1];
                    raw[t - 1]
                        .iter()
                        .enumerate()
                        .map(|(row, cell)| match cell {
                            None => Ok(MISSING_CODE),
                            Some(label) => levels
                                .iter()
                                .position(|l| l == label)
                                .map(|c| c as i64)
                                .ok_or_else(|| {
                                    Error::validation(format!(
                                        "row {row}: {what} value `{label}` at time {t} is outside the declared support"
                                    ))
                                }),
                        })
                        .collect::<Result<Vec<i64>>>()
                })
                .collect()
        };

        let schema_owned = schema.clone();
        let censored_label = schema.censoring().map(|c| c.censored_level.clone());
        let treatment_level_names = build_levels(
            &treatment_raw,
            &|t| schema.declared_treatment_levels(t).map(|s| s.to_vec()),
            censored_label.as_deref(),
            "treatment",
        )?;
        let mediator_level_names = build_levels(
            &mediator_raw,
            &|t| schema.declared_mediator_support(t).map(|s| s.to_vec()),
            None,
            "mediator",
        )?;
        let treatments = encode(&treatment_raw, &treatment_level_names, "treatment")?;
        let mediators = encode(&mediator_raw, &mediator_level_names, "mediator")?;

        LongitudinalDataset {
            schema: schema_owned,
            n: outcome.len(),
            covariates,
            confounders,
            treatments,
            mediators,
            outcome,
            treatment_level_names,
            mediator_level_names,
            weights: None,
        }
        .validate()
    }

    pub fn schema(&self) -> &NodeSchema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn set_weights(&mut self, w: Option<Vec<f64>>) {
        self.weights = w;
    }

    /// Outcome column (always fully observed after validation).
    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    /// Treatment dictionary at time `t`.
    pub fn treatment_levels(&self, t: usize) -> &[String] {
        &self.treatment_level_names[t - 1]
    }

    /// Mediator support at time `t`: the level dictionary, which is the
    /// declared support when one was given and the sorted observed values
    /// otherwise.
    pub fn mediator_support(&self, t: usize) -> &[String] {
        &self.mediator_level_names[t - 1]
    }

    /// Number of mediator levels at time `t`.
    pub fn mediator_arity(&self, t: usize) -> usize {
        self.mediator_level_names[t - 1].len()
    }

    pub fn treatment_code(&self, t: usize, row: usize) -> i64 {
        self.treatments[t - 1][row]
    }

    pub fn mediator_code(&self, t: usize, row: usize) -> i64 {
        self.mediators[t - 1][row]
    }

    /// Code of a treatment label at time `t`, if it is a known level.
    pub fn treatment_code_of_label(&self, t: usize, label: &str) -> Option<i64> {
        let canon = canonical_label(label);
        self.treatment_level_names[t - 1]
            .iter()
            .position(|l| *l == canon)
            .map(|c| c as i64)
    }

    /// Raw value of any column as `f64`: numeric columns report their value,
    /// categorical columns their dictionary code, missing is `NaN`.
    pub fn value(&self, c: ColumnRef, row: usize) -> f64 {
        match c.role {
            Role::Covariate => self.covariates[c.time - 1][c.slot][row],
            Role::Confounder => self.confounders[c.time - 1][c.slot][row],
            Role::Treatment => {
                let code = self.treatments[c.time - 1][row];
                if code == MISSING_CODE {
                    f64::NAN
                } else {
                    code as f64
                }
            }
            Role::Mediator => {
                let code = self.mediators[c.time - 1][row];
                if code == MISSING_CODE {
                    f64::NAN
                } else {
                    code as f64
                }
            }
            Role::Outcome => self.outcome[row],
        }
    }

    /// Code of the censored treatment level at time `t`, if censoring is
    /// declared and that level exists at `t`.
    pub fn censored_code(&self, t: usize) -> Option<i64> {
        let c = self.schema.censoring()?;
        self.treatment_code_of_label(t, &c.censored_level)
    }

    /// First time at which this row is censored, if any.
    pub fn censoring_time(&self, row: usize) -> Option<usize> {
        for t in 1..=self.schema.tau() {
            if let Some(code) = self.censored_code(t) {
                if self.treatments[t - 1][row] == code {
                    return Some(t);
                }
            }
        }
        None
    }

    /// Observed range of the outcome (used to clip outcome-scale fits).
    pub fn outcome_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &y in &self.outcome {
            if y.is_finite() {
                lo = lo.min(y);
                hi = hi.max(y);
            }
        }
        (lo, hi)
    }

    /// Structural validation. Checks, in order:
    ///
    /// * the outcome is observed and finite for every row;
    /// * per-row missingness is exactly the monotone pattern induced by a
    ///   censored treatment level (no missingness at all when censoring is
    ///   not declared);
    /// * categorical codes are within their dictionaries;
    /// * weights, when present, are finite and non-negative.
    ///
    /// Validation never mutates the dataset, so it is idempotent: validating
    /// an already-valid dataset returns the identical object.
    pub fn validate(self) -> Result<LongitudinalDataset> {
        let mut problems: Vec<String> = Vec::new();
        let order = self.schema.node_order();
        let tau = self.schema.tau();

        for row in 0..self.n {
            if !self.outcome[row].is_finite() {
                problems.push(format!("row {row}: outcome is missing or non-finite"));
                continue;
            }
            let cens_t = self.censoring_time(row);
            // Index in `order` after which everything must be missing: the
            // position of the censored treatment node, if any.
            let cutoff = cens_t.map(|t| {
                order
                    .iter()
                    .position(|c| c.role == Role::Treatment && c.time == t)
                    .expect("treatment node present in node order")
            });
            for (pos, col) in order.iter().enumerate() {
                let missing = self.value(*col, row).is_nan();
                match cutoff {
                    None => {
                        if missing {
                            problems.push(format!(
                                "row {row}: `{}` is missing but the row is not censored",
                                self.schema.column_name(*col)
                            ));
                            break;
                        }
                    }
                    Some(cut) => {
                        if pos <= cut && missing {
                            problems.push(format!(
                                "row {row}: `{}` is missing before the censoring point (non-monotone missingness)",
                                self.schema.column_name(*col)
                            ));
                            break;
                        }
                        if pos > cut && !missing {
                            problems.push(format!(
                                "row {row}: `{}` is observed after censoring at time {}",
                                self.schema.column_name(*col),
                                cens_t.unwrap()
                            ));
                            break;
                        }
                    }
                }
            }
            for t in 1..=tau {
                let mc = self.mediators[t - 1][row];
                if mc != MISSING_CODE && !(0..self.mediator_arity(t) as i64).contains(&mc) {
                    problems.push(format!("row {row}: mediator code out of range at time {t}"));
                }
                let tc = self.treatments[t - 1][row];
                if tc != MISSING_CODE
                    && !(0..self.treatment_level_names[t - 1].len() as i64).contains(&tc)
                {
                    problems.push(format!("row {row}: treatment code out of range at time {t}"));
                }
            }
        }

        if let Some(w) = &self.weights {
            if w.len() != self.n {
                problems.push(format!(
                    "weight vector has {} entries for {} rows",
                    w.len(),
                    self.n
                ));
            }
            for (row, &wi) in w.iter().enumerate() {
                if !wi.is_finite() || wi < 0.0 {
                    problems.push(format!("row {row}: weight {wi} is not finite and non-negative"));
                    break;
                }
            }
        }

        if problems.is_empty() {
            Ok(self)
        } else {
            let shown = problems.iter().take(10).cloned().collect::<Vec<_>>().join("; ");
            let extra = problems.len().saturating_sub(10);
            let suffix = if extra > 0 { format!(" (+{extra} more)") } else { String::new() };
            Err(Error::validation(format!("{shown}{suffix}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::Censoring;

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
            censoring.then(|| Censoring { censored_level: "c".into() }),
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_and_dictionaries() {
        let csv = "l1,a1,z1,m1,y\n0,1,0,2,1.5\n1,0,1,0,0.5\n0,0,1,2,1.0\n";
        let d = LongitudinalDataset::from_csv_reader(&schema_tau1(false), csv.as_bytes())
            .unwrap()
            .validate()
            .unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.mediator_support(1), &["0", "2"]);
        assert_eq!(d.treatment_levels(1), &["0", "1"]);
        assert_eq!(d.mediator_code(1, 0), 1); // "2" is the second level
        assert_eq!(d.treatment_code_of_label(1, "1.0"), Some(1));
        assert_eq!(d.outcome(), &[1.5, 0.5, 1.0]);
    }

    #[test]
    fn declared_support_wins_over_observed() {
        let schema = NodeSchema::new(
            1,
            vec![vec!["l1".into()]],
            vec!["a1".into()],
            vec![vec![]],
            vec!["m1".into()],
            "y".into(),
            vec![Some(vec!["0".into(), "1".into(), "2".into()])],
            Vec::new(),
            None,
        )
        .unwrap();
        let csv = "l1,a1,m1,y\n0,1,0,1\n1,0,1,0\n";
        let d = LongitudinalDataset::from_csv_reader(&schema, csv.as_bytes()).unwrap();
        assert_eq!(d.mediator_support(1), &["0", "1", "2"]);
        assert_eq!(d.mediator_arity(1), 3);
    }

    #[test]
    fn value_outside_declared_support_is_rejected() {
        let schema = NodeSchema::new(
            1,
            vec![vec![]],
            vec!["a1".into()],
            vec![vec![]],
            vec!["m1".into()],
            "y".into(),
            vec![Some(vec!["0".into(), "1".into()])],
            Vec::new(),
            None,
        )
        .unwrap();
        let csv = "a1,m1,y\n1,5,1\n";
        let err = LongitudinalDataset::from_csv_reader(&schema, csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("outside the declared support"), "{err}");
    }

    #[test]
    fn missing_values_without_censoring_fail_validation() {
        let csv = "l1,a1,z1,m1,y\n0,1,,1,1.0\n";
        let err =
            LongitudinalDataset::from_csv_reader(&schema_tau1(false), csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("not censored"), "{err}");
    }

    #[test]
    fn censored_rows_must_be_missing_after_the_censoring_point() {
        // Row 0: censored at t=1, downstream all missing -> fine.
        // Row 1: censored but mediator still observed -> error.
        let csv = "l1,a1,z1,m1,y\n0,c,,,1.0\n0,c,,1,1.0\n1,1,0,1,0.0\n";
        let err =
            LongitudinalDataset::from_csv_reader(&schema_tau1(true), csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("observed after censoring"), "{err}");
    }

    #[test]
    fn missing_outcome_is_always_an_error() {
        let csv = "l1,a1,z1,m1,y\n1,1,0,1,0.0\n0,c,,,\n";
        let err =
            LongitudinalDataset::from_csv_reader(&schema_tau1(true), csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("outcome"), "{err}");
    }

    #[test]
    fn validation_is_idempotent() {
        let csv = "l1,a1,z1,m1,y\n0,1,0,1,1.0\n1,0,1,0,0.0\n";
        let d = LongitudinalDataset::from_csv_reader(&schema_tau1(false), csv.as_bytes()).unwrap();
        let once = d.validate().unwrap();
        let twice = once.clone().validate().unwrap();
        assert_eq!(once, twice);
    }
}
