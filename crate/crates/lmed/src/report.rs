//! JSON wire formats for command outputs.
//!
//! Field order is fixed by struct declaration order and rendering goes
//! through one canonical serializer, so identical inputs yield byte-identical
//! report files — a contract the command-line tests pin down.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{ContrastEstimate, MediationReport, PathEstimate, ThetaEstimate};
use crate::oracle::{AssumptionReport, SequentialReport, VonMisesReport};

/// One mediator path with its two estimated functionals.
#[derive(Debug, Clone, Serialize)]
pub struct PathReport {
    /// Mediator values along the path, as level labels.
    pub m: Vec<String>,
    /// Mean outcome under the primary regime at this path.
    pub phi: f64,
    /// Path probability under the reference regime.
    pub lambda: f64,
}

impl PathReport {
    fn from_estimate(p: &PathEstimate) -> PathReport {
        PathReport { m: p.labels.clone(), phi: p.phi, lambda: p.lambda }
    }
}

/// One effect contrast.
#[derive(Debug, Clone, Serialize)]
pub struct ContrastReport {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci: [f64; 2],
}

impl ContrastReport {
    fn from_estimate(c: &ContrastEstimate) -> ContrastReport {
        ContrastReport {
            name: c.name.clone(),
            estimate: c.estimate,
            se: c.se,
            ci: [c.ci.0, c.ci.1],
        }
    }
}

/// Run diagnostics carried on every estimate report.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    /// Total propensity-floor truncation events across all runs behind the
    /// report.
    pub truncated_weights: usize,
    pub folds: usize,
    pub seed: u64,
}

/// Estimation output: the target with its uncertainty, per-path tables, and
/// any contrasts.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub theta: f64,
    pub se: f64,
    pub ci: [f64; 2],
    pub alpha: f64,
    pub paths: Vec<PathReport>,
    pub contrasts: Vec<ContrastReport>,
    pub diagnostics: DiagnosticsReport,
}

impl EstimateReport {
    /// Report for a single-target run (no contrasts).
    pub fn from_theta(est: &ThetaEstimate) -> EstimateReport {
        EstimateReport {
            theta: est.theta,
            se: est.se,
            ci: [est.ci.0, est.ci.1],
            alpha: est.alpha,
            paths: est.paths.iter().map(PathReport::from_estimate).collect(),
            contrasts: Vec::new(),
            diagnostics: DiagnosticsReport {
                truncated_weights: est.diagnostics.truncated_weights,
                folds: est.diagnostics.folds,
                seed: est.diagnostics.seed,
            },
        }
    }

    /// Report for a full decomposition: the headline numbers come from the
    /// cross-regime run, the contrasts from all three runs, and the
    /// truncation count totals the three runs.
    pub fn from_mediation(rep: &MediationReport) -> EstimateReport {
        let cross = &rep.theta_cross;
        EstimateReport {
            theta: cross.theta,
            se: cross.se,
            ci: [cross.ci.0, cross.ci.1],
            alpha: cross.alpha,
            paths: cross.paths.iter().map(PathReport::from_estimate).collect(),
            contrasts: rep.contrasts.iter().map(ContrastReport::from_estimate).collect(),
            diagnostics: DiagnosticsReport {
                truncated_weights: cross.diagnostics.truncated_weights
                    + rep.theta_primary.diagnostics.truncated_weights
                    + rep.theta_reference.diagnostics.truncated_weights,
                folds: cross.diagnostics.folds,
                seed: cross.diagnostics.seed,
            },
        }
    }
}

/// One von Mises family/time cell in wire form.
#[derive(Debug, Clone, Serialize)]
pub struct VonMisesCellReport {
    /// `"mediator-step"`, `"treatment-step"` or `"path"`.
    pub family: String,
    pub t: usize,
    pub cells_checked: usize,
    pub max_abs_residual: f64,
    pub remainder_rms: f64,
}

/// Oracle output for one model and intervention pair: exact functionals, the
/// efficiency bound, cross-route agreement gaps, assumption audit, and the
/// expansion-identity residuals under a seeded perturbation.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub theta: f64,
    pub paths: Vec<PathReport>,
    /// Mean of the influence function under the truth (zero up to float
    /// error).
    pub mean_score: f64,
    /// Variance of the influence function: the efficiency bound.
    pub var_score: f64,
    /// Absolute gap between the two independent target enumerations.
    pub identification_gap: f64,
    /// Worst per-path gap between the backward recursion seeds and the
    /// direct enumeration.
    pub max_phi_gap: f64,
    pub max_lambda_gap: f64,
    pub assumptions: AssumptionReport,
    pub perturbation_eps: f64,
    pub von_mises: Vec<VonMisesCellReport>,
    pub max_von_mises_residual: f64,
}

impl OracleReport {
    /// Assemble from the individual oracle results. `labels` maps a path's
    /// codes to display labels (the schema's level names).
    pub fn assemble(
        sequential: &SequentialReport,
        identification_gap: f64,
        mean_score: f64,
        var_score: f64,
        assumptions: AssumptionReport,
        von_mises: &VonMisesReport,
        labels: impl Fn(&[i64]) -> Vec<String>,
    ) -> OracleReport {
        OracleReport {
            theta: sequential.truth.theta,
            paths: sequential
                .truth
                .paths
                .iter()
                .map(|p| PathReport { m: labels(&p.path), phi: p.phi, lambda: p.lambda })
                .collect(),
            mean_score,
            var_score,
            identification_gap,
            max_phi_gap: sequential.max_phi_gap,
            max_lambda_gap: sequential.max_lambda_gap,
            assumptions,
            perturbation_eps: von_mises.eps,
            von_mises: von_mises
                .families
                .iter()
                .map(|f| VonMisesCellReport {
                    family: f.family.to_string(),
                    t: f.t,
                    cells_checked: f.cells_checked,
                    max_abs_residual: f.max_abs_residual,
                    remainder_rms: f.remainder_rms,
                })
                .collect(),
            max_von_mises_residual: von_mises.max_abs_residual,
        }
    }
}

/// Canonical JSON rendering: pretty-printed, exact float round-trip, one
/// trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::numeric(format!("report serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}
