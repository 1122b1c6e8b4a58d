//! Weighted linear ridge regression on one-hot-expanded features.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::{DesignMatrix, Feature};

/// Layout of the expanded (intercept + one-hot) design.
#[derive(Debug, Clone, PartialEq)]
pub struct Expander {
    feats: Vec<Feature>,
    /// Expanded width including the leading intercept column.
    pub width: usize,
}

impl Expander {
    pub fn new(feats: &[Feature]) -> Expander {
        let width = 1 + feats
            .iter()
            .map(|f| match f {
                Feature::Numeric => 1,
                // First level is the reference category.
                Feature::Categorical { card } => card.saturating_sub(1),
            })
            .sum::<usize>();
        Expander { feats: feats.to_vec(), width }
    }

    /// Expand one raw row into `buf` (intercept first).
    pub fn expand_into(&self, row: &[f64], buf: &mut [f64]) {
        buf.fill(0.0);
        buf[0] = 1.0;
        let mut j = 1;
        for (f, &v) in self.feats.iter().zip(row) {
            match f {
                Feature::Numeric => {
                    buf[j] = v;
                    j += 1;
                }
                Feature::Categorical { card } => {
                    let code = v as usize;
                    if code >= 1 && code < *card {
                        buf[j + code - 1] = 1.0;
                    }
                    j += card - 1;
                }
            }
        }
    }
}

/// Fitted linear model: coefficients over the expanded design.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub expander: Expander,
    pub beta: Vec<f64>,
}

impl LinearModel {
    /// Minimize the weighted squared error plus `ridge/2 * ||beta_noint||^2`
    /// (the intercept is unpenalized) by solving the normal equations.
    pub fn fit(
        x: &DesignMatrix,
        y: &[f64],
        w: Option<&[f64]>,
        ridge: f64,
    ) -> Result<LinearModel> {
        let expander = Expander::new(&x.feats);
        let p = expander.width;
        let mut xtx = DMatrix::<f64>::zeros(p, p);
        let mut xty = DVector::<f64>::zeros(p);
        let mut buf = vec![0.0; p];
        for r in 0..x.rows() {
            let wi = w.map_or(1.0, |w| w[r]);
            if wi == 0.0 {
                continue;
            }
            expander.expand_into(x.row(r), &mut buf);
            for i in 0..p {
                let wxi = wi * buf[i];
                xty[i] += wxi * y[r];
                for j in i..p {
                    xtx[(i, j)] += wxi * buf[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                xtx[(i, j)] = xtx[(j, i)];
            }
        }
        for i in 1..p {
            xtx[(i, i)] += ridge;
        }
        let beta = solve_spd(xtx, xty)?;
        Ok(LinearModel { expander, beta: beta.iter().copied().collect() })
    }

    pub fn predict(&self, x: &DesignMatrix, r: usize) -> f64 {
        let mut buf = vec![0.0; self.expander.width];
        self.expander.expand_into(x.row(r), &mut buf);
        buf.iter().zip(&self.beta).map(|(xi, bi)| xi * bi).sum()
    }
}

/// Solve a symmetric positive semi-definite system, falling back to an SVD
/// pseudo-inverse when the Cholesky factorization fails (collinear designs
/// with zero penalty).
pub fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(&b));
    }
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-10)
        .map_err(|e| Error::numeric(format!("singular normal equations: {e}")))
}
