//! Penalized logistic regression fit by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

use super::ridge::{solve_spd, Expander};
use super::DesignMatrix;

/// Convergence tolerance on the infinity norm of the penalized gradient.
const GRAD_TOL: f64 = 1e-8;
/// Hard cap on Newton iterations; separable data stops here with fitted
/// probabilities numerically at the boundary.
const MAX_ITER: usize = 200;
/// Linear predictors are clamped to this magnitude before exponentiation.
const ETA_CLAMP: f64 = 30.0;

/// Fitted logistic model over the one-hot-expanded design. The target may be
/// fractional (values in `[0, 1]`), which the IRLS update handles unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub expander: Expander,
    pub beta: Vec<f64>,
}

fn sigmoid(eta: f64) -> f64 {
    let eta = eta.clamp(-ETA_CLAMP, ETA_CLAMP);
    1.0 / (1.0 + (-eta).exp())
}

impl LogisticModel {
    /// Minimize the weighted negative log-likelihood plus
    /// `ridge/2 * ||beta_noint||^2` (intercept unpenalized) by damped Newton
    /// steps. Stops at gradient tolerance `1e-8` or after 200 iterations.
    pub fn fit(
        x: &DesignMatrix,
        y: &[f64],
        w: Option<&[f64]>,
        ridge: f64,
    ) -> Result<LogisticModel> {
        let expander = Expander::new(&x.feats);
        let p = expander.width;
        let n = x.rows();

        // Pre-expand the design once; IRLS revisits every row each iteration.
        let mut xe = vec![0.0; n * p];
        for r in 0..n {
            expander.expand_into(x.row(r), &mut xe[r * p..(r + 1) * p]);
        }
        let weight_of = |r: usize| w.map_or(1.0, |w| w[r]);

        let objective = |beta: &[f64]| -> f64 {
            let mut obj = 0.0;
            for r in 0..n {
                let wi = weight_of(r);
                if wi == 0.0 {
                    continue;
                }
                let eta: f64 = xe[r * p..(r + 1) * p]
                    .iter()
                    .zip(beta)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    .clamp(-ETA_CLAMP, ETA_CLAMP);
                // -log-likelihood written to stay finite for fractional y.
                obj += wi * (ln_1p_exp(eta) - y[r] * eta);
            }
            for b in &beta[1..] {
                obj += 0.5 * ridge * b * b;
            }
            obj
        };

        let mut beta = vec![0.0; p];
        let mut obj = objective(&beta);
        for _ in 0..MAX_ITER {
            // Gradient and Hessian of the penalized objective.
            let mut grad = DVector::<f64>::zeros(p);
            let mut hess = DMatrix::<f64>::zeros(p, p);
            for r in 0..n {
                let wi = weight_of(r);
                if wi == 0.0 {
                    continue;
                }
                let xr = &xe[r * p..(r + 1) * p];
                let eta: f64 = xr.iter().zip(&beta).map(|(a, b)| a * b).sum();
                let mu = sigmoid(eta);
                let resid = wi * (mu - y[r]);
                let curv = wi * mu * (1.0 - mu);
                for i in 0..p {
                    grad[i] += resid * xr[i];
                    let cxi = curv * xr[i];
                    for j in i..p {
                        hess[(i, j)] += cxi * xr[j];
                    }
                }
            }
            for i in 0..p {
                for j in 0..i {
                    hess[(i, j)] = hess[(j, i)];
                }
            }
            for i in 1..p {
                grad[i] += ridge * beta[i];
                hess[(i, i)] += ridge;
            }
            if grad.amax() <= GRAD_TOL {
                break;
            }
            // Tiny jitter keeps the solve stable once probabilities saturate.
            for i in 0..p {
                hess[(i, i)] += 1e-12;
            }
            let step = solve_spd(hess, grad)?;

            // Step-halving line search on the penalized objective.
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand: Vec<f64> =
                    beta.iter().zip(step.iter()).map(|(b, s)| b - scale * s).collect();
                let cand_obj = objective(&cand);
                if cand_obj <= obj + 1e-14 {
                    beta = cand;
                    obj = cand_obj;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(LogisticModel { expander, beta })
    }

    /// Predicted probability for one row.
    pub fn predict(&self, x: &DesignMatrix, r: usize) -> f64 {
        let mut buf = vec![0.0; self.expander.width];
        self.expander.expand_into(x.row(r), &mut buf);
        sigmoid(buf.iter().zip(&self.beta).map(|(a, b)| a * b).sum())
    }
}

/// `ln(1 + exp(eta))` without overflow.
fn ln_1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}
