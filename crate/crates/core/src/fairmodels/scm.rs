//! Synthetic-control counterfactual claims: each policy is matched by a
//! convex combination of similar policies from the other group.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datakit::{Dataset, GowerSpace, ModelMatrix};
use crate::error::{domain, Error, Result};

/// Simplex weights over a donor pool and the achieved V-weighted distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
}

// Weight on the sum-to-one row of the augmented least-squares system.
const SUM_PENALTY: f64 = 1e3;

/// Solves `min_W sqrt((x0 - X1 W)' V (x0 - X1 W))` over the simplex, where the
/// columns of `X1` are the `donors`.
pub fn scm_weights(x0: &[f64], donors: &[&[f64]], v: &[f64]) -> Result<ScmSolution> {
    let p = x0.len();
    let k = donors.len();
    if k == 0 {
        return domain("synthetic control needs a non-empty donor pool");
    }
    if v.len() != p {
        return Err(Error::Dimension { expected: p, found: v.len() });
    }
    if v.iter().any(|w| !(*w >= 0.0)) {
        return domain("importance weights must be non-negative");
    }
    for d in donors {
        if d.len() != p {
            return Err(Error::Dimension { expected: p, found: d.len() });
        }
    }
    if k == 1 {
        return Ok(ScmSolution {
            weights: vec![1.0],
            objective: objective(x0, donors, v, &[1.0]),
        });
    }
    let sv: Vec<f64> = v.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(p + 1, k, |r, c| if r < p { sv[r] * donors[c][r] } else { SUM_PENALTY });
    let b = DVector::from_fn(p + 1, |r, _| if r < p { sv[r] * x0[r] } else { SUM_PENALTY });
    let mut w = nnls(&a, &b);
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        // degenerate system; fall back to the uniform combination
        w = vec![1.0; k];
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    if let Some(exact) = polish(x0, donors, &sv, &w) {
        if objective(x0, donors, v, &exact) <= objective(x0, donors, v, &w) {
            w = exact;
        }
    }
    Ok(ScmSolution {
        objective: objective(x0, donors, v, &w),
        weights: w,
    })
}

fn objective(x0: &[f64], donors: &[&[f64]], v: &[f64], w: &[f64]) -> f64 {
    (0..x0.len())
        .map(|r| {
            let fit: f64 = donors.iter().zip(w).map(|(d, wi)| d[r] * wi).sum();
            v[r] * (x0[r] - fit).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Re-solves on the support of `w` with the sum constraint imposed exactly
/// (eliminating the last support weight). Returns `None` if the result leaves
/// the simplex.
fn polish(x0: &[f64], donors: &[&[f64]], sv: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 0.0).collect();
    let (&last, rest) = support.split_last()?;
    if rest.is_empty() {
        return None;
    }
    let p = x0.len();
    let a = DMatrix::from_fn(p, rest.len(), |r, c| sv[r] * (donors[rest[c]][r] - donors[last][r]));
    let b = DVector::from_fn(p, |r, _| sv[r] * (x0[r] - donors[last][r]));
    let sol = lstsq(&a, &b, &(0..rest.len()).collect::<Vec<_>>());
    let mut out = vec![0.0; w.len()];
    let mut sum = 0.0;
    for (&j, &v) in rest.iter().zip(&sol) {
        if !(v >= 0.0) {
            return None;
        }
        out[j] = v;
        sum += v;
    }
    if sum > 1.0 {
        return None;
    }
    out[last] = 1.0 - sum;
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Some(out)
}

/// Lawson-Hanson active-set non-negative least squares.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<f64> {
    let n = a.ncols();
    let norm = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 10.0 * f64::EPSILON * norm * (a.nrows().max(n) as f64);
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let max_outer = 3 * n;
    for _ in 0..max_outer {
        let xv = DVector::from_column_slice(&x);
        let grad = a.transpose() * (b - a * &xv);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && grad[j] > tol)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]).then(j.cmp(&i)));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let s_p = lstsq(a, b, &idx);
            if s_p.iter().all(|v| *v > tol) {
                for (&i, v) in idx.iter().zip(&s_p) {
                    x[i] = *v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&i, &s) in idx.iter().zip(&s_p) {
                if s <= tol {
                    let step = x[i] / (x[i] - s);
                    if step < alpha {
                        alpha = step;
                    }
                }
            }
            let mut s_full = vec![0.0; n];
            for (&i, &s) in idx.iter().zip(&s_p) {
                s_full[i] = s;
            }
            for i in 0..n {
                x[i] += alpha * (s_full[i] - x[i]);
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> Vec<f64> {
    let sub = a.select_columns(cols);
    let svd = sub.svd(true, true);
    let top = svd.singular_values.max();
    if !(top > 0.0) {
        return vec![0.0; cols.len()];
    }
    let eps = 1e-12 * top;
    svd.solve(b, eps).expect("svd with u and v").iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmRow {
    pub y_counterfactual: f64,
    pub y_adjusted: f64,
    /// `(row, weight)` for every donor with positive weight.
    pub donors: Vec<(usize, f64)>,
    pub objective: f64,
}

/// Counterfactual and adjusted target for every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmAdjustment {
    /// Diagonal of V, one entry per design column.
    pub v: Vec<f64>,
    pub rows: Vec<ScmRow>,
}

impl ScmAdjustment {
    pub fn adjusted_target(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y_adjusted).collect()
    }

    pub fn counterfactual(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y_counterfactual).collect()
    }
}

/// Builds `Y' = (Y0 + Y1' W) / 2` for every row of `data`.
///
/// `mm` is the non-protected design of `data`; its columns are min-max scaled
/// before matching and weighted by `importances`. Donors are the `k` nearest
/// rows of the other group by Gower distance.
pub fn scm_adjust(data: &Dataset, mm: &ModelMatrix, importances: &[f64], k: usize) -> Result<ScmAdjustment> {
    let n = data.n_rows();
    if mm.nrows() != n {
        return Err(Error::Dimension { expected: n, found: mm.nrows() });
    }
    if importances.len() != mm.ncols() {
        return Err(Error::Dimension {
            expected: mm.ncols(),
            found: importances.len(),
        });
    }
    if k == 0 {
        return domain("donor pool size must be positive");
    }
    let total: f64 = importances.iter().sum();
    if !(total > 0.0) || importances.iter().any(|v| !(*v >= 0.0)) {
        return domain("importances must be non-negative with a positive sum");
    }
    let v: Vec<f64> = importances.iter().map(|x| x / total).collect();
    let mask = data.group_mask()?;
    let group_a: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    let group_b: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
    if group_a.is_empty() || group_b.is_empty() {
        return domain("both groups need at least one row");
    }
    let p = mm.ncols();
    let mut scaled = vec![0.0; n * p];
    for j in 0..p {
        let col = mm.design.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        for i in 0..n {
            scaled[i * p + j] = (col[i] - lo) / span;
        }
    }
    let row = |i: usize| &scaled[i * p..(i + 1) * p];
    let y = data.target();
    let space = GowerSpace::new(data);
    let rows: Vec<Result<ScmRow>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pool = if mask[i] { &group_b } else { &group_a };
            let near = space.k_nearest_among(i, pool, k);
            let donors: Vec<&[f64]> = near.iter().map(|(j, _)| row(*j)).collect();
            let sol = scm_weights(row(i), &donors, &v)?;
            let y_cf: f64 = near.iter().zip(&sol.weights).map(|((j, _), w)| y[*j] * w).sum();
            Ok(ScmRow {
                y_counterfactual: y_cf,
                y_adjusted: (y[i] + y_cf) / 2.0,
                donors: near
                    .iter()
                    .zip(&sol.weights)
                    .filter(|(_, w)| **w > 0.0)
                    .map(|((j, _), w)| (*j, *w))
                    .collect(),
                objective: sol.objective,
            })
        })
        .collect();
    Ok(ScmAdjustment {
        v,
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}
