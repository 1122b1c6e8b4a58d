//! Longitudinal schema: which columns play which role at which time, plus the
//! deterministic history (conditioning-set) layout used everywhere else.
//!
//! A study with `tau` decision points has, per time `t` in `1..=tau`:
//! baseline/time-varying covariates `L_t` (zero or more columns), a single
//! categorical treatment `A_t` (possibly a composite that includes a
//! "censored" level), intermediate confounders `Z_t` (zero or more columns),
//! and a single categorical mediator `M_t`. The final outcome `Y` is a single
//! numeric column measured after time `tau`.

use std::collections::BTreeMap;
use std::fmt;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Role a dataset column plays in the longitudinal structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// Covariate block `L_t` (numeric, zero or more columns per time).
    Covariate,
    /// Treatment `A_t` (categorical, exactly one per time).
    Treatment,
    /// Intermediate confounder block `Z_t` (numeric, zero or more per time).
    Confounder,
    /// Mediator `M_t` (categorical, exactly one per time).
    Mediator,
    /// Final outcome `Y` (numeric, exactly one).
    Outcome,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Covariate => "covariate",
            Role::Treatment => "treatment",
            Role::Confounder => "confounder",
            Role::Mediator => "mediator",
            Role::Outcome => "outcome",
        };
        f.write_str(s)
    }
}

/// Node kind whose conditioning history can be requested.
///
/// `Covariate` at time `t` refers to the block `L_t` (and `t = tau + 1` to the
/// outcome); the other kinds refer to the single node of that role at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryKind {
    Covariate,
    Treatment,
    Confounder,
    Mediator,
}

/// Reference to a single column: role, time (1-based) and slot within the
/// block (always 0 for treatment/mediator).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub role: Role,
    pub time: usize,
    pub slot: usize,
}

/// Censoring declaration: the treatment level whose meaning is "lost to
/// follow-up at this point". Once a row takes this level at some time, every
/// later node is missing (the outcome stays observed by convention).
#[derive(Debug, Clone, PartialEq)]
pub struct Censoring {
    pub censored_level: String,
}

/// Validated longitudinal schema.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSchema {
    tau: usize,
    covariates: Vec<Vec<String>>,
    treatments: Vec<String>,
    confounders: Vec<Vec<String>>,
    mediators: Vec<String>,
    outcome: String,
    /// Declared mediator support per time (labels, canonicalized), if any.
    mediator_support: Vec<Option<Vec<String>>>,
    /// Declared treatment levels per time (labels, canonicalized), if any.
    treatment_levels: Vec<Option<Vec<String>>>,
    censoring: Option<Censoring>,
}

/// Canonical label for a categorical value: numeric-looking labels are
/// normalized (`"1"`, `"1.0"` and `1` all map to `"1"`) so CSV cells and JSON
/// declarations compare equal.
pub fn canonical_label(raw: &str) -> String {
    let trimmed = raw.trim();
    if let Ok(x) = trimmed.parse::<f64>() {
        if x.is_finite() && x.fract() == 0.0 && x.abs() < 9.0e15 {
            return format!("{}", x as i64);
        }
        if x.is_finite() {
            return format!("{x}");
        }
    }
    trimmed.to_string()
}

/// Sort labels numerically when they all parse as numbers, lexicographically
/// otherwise, and drop duplicates. Used for every categorical dictionary so
/// code assignment is deterministic.
pub fn sorted_levels(mut labels: Vec<String>) -> Vec<String> {
    let all_numeric = labels.iter().all(|l| l.parse::<f64>().is_ok());
    if all_numeric {
        labels.sort_by(|a, b| {
            let (x, y) = (a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap());
            x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal)
        });
    } else {
        labels.sort();
    }
    labels.dedup();
    labels
}

impl NodeSchema {
    /// Build a schema directly from parts. `covariates[t-1]` etc. are indexed
    /// by time; `mediator_support`/`treatment_levels` may be empty to mean
    /// "none declared anywhere".
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        tau: usize,
        covariates: Vec<Vec<String>>,
        treatments: Vec<String>,
        confounders: Vec<Vec<String>>,
        mediators: Vec<String>,
        outcome: String,
        mediator_support: Vec<Option<Vec<String>>>,
        treatment_levels: Vec<Option<Vec<String>>>,
        censoring: Option<Censoring>,
    ) -> Result<Self> {
        if tau == 0 {
            return Err(Error::validation("tau must be at least 1"));
        }
        if treatments.len() != tau || mediators.len() != tau {
            return Err(Error::validation(format!(
                "expected exactly one treatment and one mediator column for each of the {tau} times"
            )));
        }
        if covariates.len() != tau || confounders.len() != tau {
            return Err(Error::validation(
                "covariate/confounder blocks must be declared for every time (possibly empty)",
            ));
        }
        let mediator_support = normalize_declared(mediator_support, tau)?;
        let treatment_levels = normalize_declared(treatment_levels, tau)?;
        let schema = NodeSchema {
            tau,
            covariates,
            treatments,
            confounders,
            mediators,
            outcome,
            mediator_support,
            treatment_levels,
            censoring: censoring.map(|c| Censoring {
                censored_level: canonical_label(&c.censored_level),
            }),
        };
        schema.check_unique_names()?;
        Ok(schema)
    }

    fn check_unique_names(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for c in self.all_columns() {
            let name = self.column_name(c).to_string();
            if let Some(prev) = seen.insert(name.clone(), c) {
                return Err(Error::validation(format!(
                    "duplicate column name `{name}` ({} t={} and {} t={})",
                    prev.role, prev.time, c.role, c.time
                )));
            }
        }
        if seen.contains_key(&self.outcome) {
            return Err(Error::validation(format!(
                "outcome column `{}` reuses another column's name",
                self.outcome
            )));
        }
        Ok(())
    }

    /// Parse the JSON sidecar format. See `docs` / shipped fixtures for the
    /// layout: a `tau`, a `columns` array of `{name, role, time}` and optional
    /// `mediator_support`, `treatment_levels`, `censoring` objects.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: SchemaJson = serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("schema JSON: {e}")))?;
        raw.into_schema()
    }

    /// Number of decision points.
    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn covariate_names(&self, t: usize) -> &[String] {
        &self.covariates[t - 1]
    }

    pub fn confounder_names(&self, t: usize) -> &[String] {
        &self.confounders[t - 1]
    }

    pub fn treatment_name(&self, t: usize) -> &str {
        &self.treatments[t - 1]
    }

    pub fn mediator_name(&self, t: usize) -> &str {
        &self.mediators[t - 1]
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome
    }

    pub fn declared_mediator_support(&self, t: usize) -> Option<&[String]> {
        self.mediator_support[t - 1].as_deref()
    }

    pub fn declared_treatment_levels(&self, t: usize) -> Option<&[String]> {
        self.treatment_levels[t - 1].as_deref()
    }

    pub fn censoring(&self) -> Option<&Censoring> {
        self.censoring.as_ref()
    }

    /// Name of the column a reference points at.
    pub fn column_name(&self, c: ColumnRef) -> &str {
        match c.role {
            Role::Covariate => &self.covariates[c.time - 1][c.slot],
            Role::Treatment => &self.treatments[c.time - 1],
            Role::Confounder => &self.confounders[c.time - 1][c.slot],
            Role::Mediator => &self.mediators[c.time - 1],
            Role::Outcome => &self.outcome,
        }
    }

    /// All non-outcome columns in temporal order: for each time `t`, the
    /// covariate block, then treatment, confounder block, mediator. This is
    /// the order monotone missingness is checked against.
    pub fn node_order(&self) -> Vec<ColumnRef> {
        let mut out = Vec::new();
        for t in 1..=self.tau {
            for slot in 0..self.covariates[t - 1].len() {
                out.push(ColumnRef { role: Role::Covariate, time: t, slot });
            }
            out.push(ColumnRef { role: Role::Treatment, time: t, slot: 0 });
            for slot in 0..self.confounders[t - 1].len() {
                out.push(ColumnRef { role: Role::Confounder, time: t, slot });
            }
            out.push(ColumnRef { role: Role::Mediator, time: t, slot: 0 });
        }
        out
    }

    fn all_columns(&self) -> Vec<ColumnRef> {
        self.node_order()
    }

    /// Ordered conditioning history for the node of `kind` at time `t`.
    ///
    /// The histories nest: the treatment history at `t` collects all past
    /// covariates `L_1..L_t` followed by past mediators, confounders and
    /// treatments; the confounder history prepends `A_t`; the mediator history
    /// prepends `Z_t`; the covariate-block history at `t` prepends `M_{t-1}`
    /// to the mediator history at `t-1` (empty at `t = 1`). Requesting the
    /// covariate history at `tau + 1` yields the complete past.
    ///
    /// The concatenation order is fixed so learner design matrices are
    /// reproducible; each smaller history is a contiguous suffix of the larger
    /// ones it embeds into.
    pub fn history_columns(&self, kind: HistoryKind, t: usize) -> Vec<ColumnRef> {
        match kind {
            HistoryKind::Treatment => {
                assert!((1..=self.tau).contains(&t), "treatment history time out of range");
                let mut out = Vec::new();
                for u in 1..=t {
                    for slot in 0..self.covariates[u - 1].len() {
                        out.push(ColumnRef { role: Role::Covariate, time: u, slot });
                    }
                }
                for u in 1..t {
                    out.push(ColumnRef { role: Role::Mediator, time: u, slot: 0 });
                }
                for u in 1..t {
                    for slot in 0..self.confounders[u - 1].len() {
                        out.push(ColumnRef { role: Role::Confounder, time: u, slot });
                    }
                }
                for u in 1..t {
                    out.push(ColumnRef { role: Role::Treatment, time: u, slot: 0 });
                }
                out
            }
            HistoryKind::Confounder => {
                let mut out = vec![ColumnRef { role: Role::Treatment, time: t, slot: 0 }];
                out.extend(self.history_columns(HistoryKind::Treatment, t));
                out
            }
            HistoryKind::Mediator => {
                let mut out: Vec<ColumnRef> = (0..self.confounders[t - 1].len())
                    .map(|slot| ColumnRef { role: Role::Confounder, time: t, slot })
                    .collect();
                out.extend(self.history_columns(HistoryKind::Confounder, t));
                out
            }
            HistoryKind::Covariate => {
                assert!(
                    (1..=self.tau + 1).contains(&t),
                    "covariate history time out of range"
                );
                if t == 1 {
                    return Vec::new();
                }
                let mut out = vec![ColumnRef { role: Role::Mediator, time: t - 1, slot: 0 }];
                out.extend(self.history_columns(HistoryKind::Mediator, t - 1));
                out
            }
        }
    }
}

fn normalize_declared(
    declared: Vec<Option<Vec<String>>>,
    tau: usize,
) -> Result<Vec<Option<Vec<String>>>> {
    let mut declared = declared;
    if declared.is_empty() {
        declared = vec![None; tau];
    }
    if declared.len() != tau {
        return Err(Error::validation(
            "declared level lists must cover every time or be omitted entirely",
        ));
    }
    Ok(declared
        .into_iter()
        .map(|opt| {
            opt.map(|labels| {
                sorted_levels(labels.iter().map(|l| canonical_label(l)).collect())
            })
        })
        .collect())
}

// ---------------------------------------------------------------------------
// JSON sidecar representation
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaJson {
    tau: usize,
    columns: Vec<ColumnJson>,
    #[serde(default)]
    mediator_support: BTreeMap<String, Vec<serde_json::Value>>,
    #[serde(default)]
    treatment_levels: BTreeMap<String, Vec<serde_json::Value>>,
    #[serde(default)]
    censoring: Option<CensoringJson>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnJson {
    name: String,
    role: String,
    #[serde(default)]
    time: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CensoringJson {
    censored_level: serde_json::Value,
}

fn value_label(v: &serde_json::Value) -> Result<String> {
    match v {
        serde_json::Value::String(s) => Ok(canonical_label(s)),
        serde_json::Value::Number(n) => Ok(canonical_label(&n.to_string())),
        serde_json::Value::Bool(b) => Ok(if *b { "1".into() } else { "0".into() }),
        other => Err(Error::validation(format!(
            "categorical level must be a string, number or bool, got {other}"
        ))),
    }
}

impl SchemaJson {
    fn into_schema(self) -> Result<NodeSchema> {
        let tau = self.tau;
        if tau == 0 || tau > 64 {
            return Err(Error::validation("tau must be in 1..=64"));
        }
        let mut covariates = vec![Vec::new(); tau];
        let mut confounders = vec![Vec::new(); tau];
        let mut treatments: Vec<Option<String>> = vec![None; tau];
        let mut mediators: Vec<Option<String>> = vec![None; tau];
        let mut outcome: Option<String> = None;

        for col in &self.columns {
            let role = col.role.as_str();
            if role == "outcome" {
                if outcome.replace(col.name.clone()).is_some() {
                    return Err(Error::validation("more than one outcome column declared"));
                }
                continue;
            }
            let t = col.time.ok_or_else(|| {
                Error::validation(format!("column `{}` needs a time in 1..=tau", col.name))
            })?;
            if !(1..=tau).contains(&t) {
                return Err(Error::validation(format!(
                    "column `{}` has time {t} outside 1..={tau}",
                    col.name
                )));
            }
            match role {
                "covariate" => covariates[t - 1].push(col.name.clone()),
                "confounder" => confounders[t - 1].push(col.name.clone()),
                "treatment" => {
                    if treatments[t - 1].replace(col.name.clone()).is_some() {
                        return Err(Error::validation(format!(
                            "two treatment columns declared at time {t}"
                        )));
                    }
                }
                "mediator" => {
                    if mediators[t - 1].replace(col.name.clone()).is_some() {
                        return Err(Error::validation(format!(
                            "two mediator columns declared at time {t}"
                        )));
                    }
                }
                other => {
                    return Err(Error::validation(format!(
                        "unknown role `{other}` for column `{}`",
                        col.name
                    )))
                }
            }
        }

        let treatments: Vec<String> = treatments
            .into_iter()
            .enumerate()
            .map(|(i, o)| {
                o.ok_or_else(|| Error::validation(format!("missing treatment column at time {}", i + 1)))
            })
            .collect::<Result<_>>()?;
        let mediators: Vec<String> = mediators
            .into_iter()
            .enumerate()
            .map(|(i, o)| {
                o.ok_or_else(|| Error::validation(format!("missing mediator column at time {}", i + 1)))
            })
            .collect::<Result<_>>()?;
        let outcome = outcome.ok_or_else(|| Error::validation("missing outcome column"))?;

        let per_time = |map: &BTreeMap<String, Vec<serde_json::Value>>| -> Result<Vec<Option<Vec<String>>>> {
            let mut out = vec![None; tau];
            for (k, vals) in map {
                let t: usize = k
                    .parse()
                    .map_err(|_| Error::validation(format!("level map key `{k}` is not a time")))?;
                if !(1..=tau).contains(&t) {
                    return Err(Error::validation(format!("level map time {t} outside 1..={tau}")));
                }
                let labels = vals.iter().map(value_label).collect::<Result<Vec<_>>>()?;
                if labels.is_empty() {
                    return Err(Error::validation(format!("declared level set at time {t} is empty")));
                }
                out[t - 1] = Some(labels);
            }
            Ok(out)
        };

        NodeSchema::new(
            tau,
            covariates,
            treatments,
            confounders,
            mediators,
            outcome,
            per_time(&self.mediator_support)?,
            per_time(&self.treatment_levels)?,
            self.censoring
                .map(|c| {
                    Ok::<_, Error>(Censoring {
                        censored_level: value_label(&c.censored_level)?,
                    })
                })
                .transpose()?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_tau2() -> NodeSchema {
        NodeSchema::new(
            2,
            vec![vec!["l1".into()], vec!["l2".into()]],
            vec!["a1".into(), "a2".into()],
            vec![vec!["z1".into()], vec!["z2".into()]],
            vec!["m1".into(), "m2".into()],
            "y".into(),
            Vec::new(),
            Vec::new(),
            None,
        )
        .unwrap()
    }

    fn names(schema: &NodeSchema, cols: &[ColumnRef]) -> Vec<String> {
        cols.iter().map(|c| schema.column_name(*c).to_string()).collect()
    }

    #[test]
    fn treatment_history_at_first_time_is_baseline_only() {
        let s = schema_tau2();
        let h = s.history_columns(HistoryKind::Treatment, 1);
        assert_eq!(names(&s, &h), vec!["l1"]);
    }

    #[test]
    fn mediator_history_prepends_confounder_and_treatment() {
        let s = schema_tau2();
        let h = s.history_columns(HistoryKind::Mediator, 1);
        assert_eq!(names(&s, &h), vec!["z1", "a1", "l1"]);
    }

    #[test]
    fn treatment_history_unrolls_covariates_then_mediators_confounders_treatments() {
        let s = schema_tau2();
        let h = s.history_columns(HistoryKind::Treatment, 2);
        assert_eq!(names(&s, &h), vec!["l1", "l2", "m1", "z1", "a1"]);
    }

    #[test]
    fn covariate_history_at_one_is_empty_and_at_tau_plus_one_is_full() {
        let s = schema_tau2();
        assert!(s.history_columns(HistoryKind::Covariate, 1).is_empty());
        let h = s.history_columns(HistoryKind::Covariate, 3);
        assert_eq!(names(&s, &h), vec!["m2", "z2", "a2", "l1", "l2", "m1", "z1", "a1"]);
    }

    #[test]
    fn histories_nest_as_ordered_subsequences() {
        let s = schema_tau2();
        for t in 1..=2 {
            let a = s.history_columns(HistoryKind::Treatment, t);
            let z = s.history_columns(HistoryKind::Confounder, t);
            let m = s.history_columns(HistoryKind::Mediator, t);
            // Each smaller history is a contiguous suffix of the next larger one.
            assert_eq!(&z[z.len() - a.len()..], a.as_slice());
            assert_eq!(&m[m.len() - z.len()..], z.as_slice());
        }
    }

    #[test]
    fn canonical_labels_merge_numeric_spellings() {
        assert_eq!(canonical_label("1"), "1");
        assert_eq!(canonical_label("1.0"), "1");
        assert_eq!(canonical_label(" 2 "), "2");
        assert_eq!(canonical_label("x"), "x");
        assert_eq!(canonical_label("1.5"), "1.5");
    }

    #[test]
    fn sorted_levels_orders_numerically_when_possible() {
        assert_eq!(
            sorted_levels(vec!["10".into(), "2".into(), "2".into()]),
            vec!["2".to_string(), "10".to_string()]
        );
        assert_eq!(
            sorted_levels(vec!["b".into(), "a".into()]),
            vec!["a".to_string(), "b".to_string()]
        );
    }

    #[test]
    fn schema_json_round_trip() {
        let text = r#"{
            "tau": 1,
            "columns": [
                {"name": "l1", "role": "covariate", "time": 1},
                {"name": "a1", "role": "treatment", "time": 1},
                {"name": "z1", "role": "confounder", "time": 1},
                {"name": "m1", "role": "mediator", "time": 1},
                {"name": "y", "role": "outcome"}
            ],
            "mediator_support": {"1": [0, 1, 2]},
            "censoring": {"censored_level": "c"}
        }"#;
        let s = NodeSchema::from_json_str(text).unwrap();
        assert_eq!(s.tau(), 1);
        assert_eq!(s.declared_mediator_support(1).unwrap(), &["0", "1", "2"]);
        assert_eq!(s.censoring().unwrap().censored_level, "c");
        assert!(s.declared_treatment_levels(1).is_none());
    }

    #[test]
    fn schema_json_rejects_duplicate_roles() {
        let text = r#"{
            "tau": 1,
            "columns": [
                {"name": "a1", "role": "treatment", "time": 1},
                {"name": "a1b", "role": "treatment", "time": 1},
                {"name": "m1", "role": "mediator", "time": 1},
                {"name": "y", "role": "outcome"}
            ]
        }"#;
        assert!(NodeSchema::from_json_str(text).is_err());
    }
}
