use serde::{Deserialize, Serialize};

use crate::datakit::ModelMatrix;
use crate::error::{domain, Error, Result};

/// Design columns with their linear dependence on the group indicator removed.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalizedMatrix {
    pub design: ModelMatrix,
    pub betas: Residualizer,
}

/// Per-column OLS coefficients `(b0, b1)` of `x_j ~ 1 + d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residualizer {
    pub b0: Vec<f64>,
    pub b1: Vec<f64>,
    /// Training share of group `a`, used for rows whose group is unknown.
    pub p_a: f64,
}

impl Residualizer {
    /// Subtracts `b0 + d * b1` from every column; `d = None` substitutes the
    /// training share of group `a`.
    pub fn apply(&self, mm: &ModelMatrix, d: Option<&[f64]>) -> Result<ModelMatrix> {
        let p = self.b0.len();
        if mm.ncols() != p {
            return Err(Error::Dimension { expected: p, found: mm.ncols() });
        }
        if let Some(d) = d {
            if d.len() != mm.nrows() {
                return Err(Error::Dimension {
                    expected: mm.nrows(),
                    found: d.len(),
                });
            }
        }
        let mut out = mm.design.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let di = d.map_or(self.p_a, |d| d[i]);
            for j in 0..p {
                row[j] -= self.b0[j] + self.b1[j] * di;
            }
        }
        ModelMatrix::new(out, mm.column_names.clone())
    }
}

/// Regresses each column on `(1, d)` and keeps the residuals.
pub fn orthogonalize(mm: &ModelMatrix, d: &[f64]) -> Result<OrthogonalizedMatrix> {
    let n = mm.nrows();
    if d.len() != n {
        return Err(Error::Dimension { expected: n, found: d.len() });
    }
    let nf = n as f64;
    let dbar = d.iter().sum::<f64>() / nf;
    let var_d: f64 = d.iter().map(|v| (v - dbar) * (v - dbar)).sum::<f64>() / nf;
    if !(var_d > 0.0) {
        return domain("group indicator has zero variance; both groups must be present");
    }
    let p = mm.ncols();
    let mut b0 = vec![0.0; p];
    let mut b1 = vec![0.0; p];
    for j in 0..p {
        let col = mm.design.column(j);
        let xbar = col.sum() / nf;
        let cov: f64 = col.iter().zip(d).map(|(x, v)| (x - xbar) * (v - dbar)).sum::<f64>() / nf;
        b1[j] = cov / var_d;
        b0[j] = xbar - b1[j] * dbar;
    }
    let betas = Residualizer { b0, b1, p_a: dbar };
    let design = betas.apply(mm, Some(d))?;
    Ok(OrthogonalizedMatrix { design, betas })
}
