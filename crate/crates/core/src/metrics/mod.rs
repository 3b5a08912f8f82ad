//! Accuracy and fairness scores, plus the solidarity and double-lift tables.

mod analytics;
mod evaluator;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causalforest::IteDistribution;
use crate::datakit::{Dataset, GowerSpace, DEFAULT_NEIGHBOR_CAP};
use crate::error::{domain, Error, Result};
use crate::stats::quantile_sorted;

pub use analytics::{double_lift, solidarity_table, DoubleLiftRow, Grouping, SolidarityCell, SolidarityTable};
pub use evaluator::{EvaluatorConfig, FairnessEvaluator};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension { expected: a, found: b });
    }
    if a == 0 {
        return domain("metric needs at least one row");
    }
    Ok(())
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// 1-based ascending ranks, ties broken by row index.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut r = vec![0.0; v.len()];
    for (k, i) in idx.into_iter().enumerate() {
        r[i] = (k + 1) as f64;
    }
    r
}

pub fn normalized_gini(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    let n = y.len();
    if n < 2 {
        return Err(Error::UndefinedMetric("gini needs at least 2 rows".into()));
    }
    let total: f64 = y.iter().sum();
    if total == 0.0 {
        return Err(Error::UndefinedMetric("gini with zero total claims".into()));
    }
    // sum over i of (n - i + 1) / n; both scores stay scaled by the total
    // so the ratio is formed without an intermediate division
    let baseline = (n + 1) as f64 / 2.0 * total;
    let score = |r: &[f64]| y.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() - baseline;
    let denom = score(&ranks(y));
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("gini of a constant outcome".into()));
    }
    Ok(score(&ranks(yhat)) / denom)
}

/// `mean(yhat | a) / mean(yhat | b)`.
pub fn disparity_impact_ratio(yhat: &[f64], in_a: &[bool]) -> Result<f64> {
    check_lengths(yhat.len(), in_a.len())?;
    let (mut sa, mut na, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for (v, &a) in yhat.iter().zip(in_a) {
        if a {
            sa += v;
            na += 1;
        } else {
            sb += v;
            nb += 1;
        }
    }
    if na == 0 || nb == 0 {
        return Err(Error::UndefinedMetric("disparity ratio needs both groups".into()));
    }
    let mb = sb / nb as f64;
    if mb <= 0.0 {
        return Err(Error::UndefinedMetric("mean premium of group b is not positive".into()));
    }
    Ok((sa / na as f64) / mb)
}

/// Frozen (row, nearest neighbour, Gower distance) triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborPairs {
    pub pairs: Vec<(usize, usize, f64)>,
}

impl NeighborPairs {
    /// Exact nearest neighbours among all rows, or among a seeded sample of
    /// `cap` rows when the table is larger.
    pub fn build(data: &Dataset, cap: usize, seed: u64) -> Result<Self> {
        let n = data.n_rows();
        let rows: Vec<usize> = if n > cap {
            let mut r = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, cap).into_vec();
            r.sort_unstable();
            r
        } else {
            (0..n).collect()
        };
        Self::among(&GowerSpace::new(data), &rows)
    }

    pub fn among(space: &GowerSpace, rows: &[usize]) -> Result<Self> {
        let nn = space.nearest_neighbors(rows)?;
        Ok(Self {
            pairs: rows.iter().zip(nn).map(|(&i, (j, d))| (i, j, d)).collect(),
        })
    }

    /// Sensitivity ratios `|yhat_i - yhat_j| / d`; identical pairs with equal
    /// predictions are skipped and zero-distance disagreements are infinite.
    pub fn ratios(&self, yhat: &[f64]) -> Vec<f64> {
        self.pairs
            .par_iter()
            .filter_map(|&(i, j, d)| {
                let delta = (yhat[i] - yhat[j]).abs();
                if d == 0.0 {
                    (delta > 0.0).then_some(f64::INFINITY)
                } else {
                    Some(delta / d)
                }
            })
            .collect()
    }

    pub fn lipschitz(&self, yhat: &[f64], q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return domain(format!("quantile level {q} outside [0, 1]"));
        }
        let mut r = self.ratios(yhat);
        if r.is_empty() {
            return Err(Error::UndefinedMetric("every neighbour pair was dropped".into()));
        }
        r.sort_by(f64::total_cmp);
        Ok(quantile_sorted(&r, q))
    }
}

/// Local Lipschitz constant: the `q`-quantile of nearest-neighbour
/// sensitivity ratios over the non-protected features.
pub fn local_lipschitz(data: &Dataset, yhat: &[f64], q: f64) -> Result<f64> {
    check_lengths(data.n_rows(), yhat.len())?;
    if data.n_rows() < 2 {
        return domain("local Lipschitz needs at least 2 rows");
    }
    NeighborPairs::build(data, DEFAULT_NEIGHBOR_CAP, 0)?.lipschitz(yhat, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub rmse: f64,
    pub gini: f64,
    pub dir: f64,
    pub lipschitz_q95: f64,
    pub median_ite: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ite_distribution: Option<IteDistribution>,
}

/// Minimization-aligned scores: accuracy, group, individual and
/// counterfactual fairness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub rmse: f64,
    pub dir_gap: f64,
    pub lipschitz: f64,
    pub median_ite: f64,
}

impl ObjectiveVector {
    pub const NAMES: [&'static str; 4] = ["rmse", "dir_gap", "lipschitz", "median_ite"];

    pub fn to_array(self) -> [f64; 4] {
        [self.rmse, self.dir_gap, self.lipschitz, self.median_ite]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            rmse: v[0],
            dir_gap: v[1],
            lipschitz: v[2],
            median_ite: v[3],
        }
    }
}

pub fn objective_vector(report: &FairnessReport) -> ObjectiveVector {
    ObjectiveVector {
        rmse: report.rmse,
        dir_gap: (report.dir - 1.0).abs(),
        lipschitz: report.lipschitz_q95,
        median_ite: report.median_ite.abs(),
    }
}
