use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Benefit,
    Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopsisConfig {
    pub weights: Vec<f64>,
    pub criteria: Vec<Criterion>,
}

impl Default for TopsisConfig {
    /// Accuracy, group, individual and counterfactual fairness, all costs.
    fn default() -> Self {
        Self {
            weights: vec![0.3, 0.3, 0.3, 0.1],
            criteria: vec![Criterion::Cost; 4],
        }
    }
}

impl TopsisConfig {
    pub fn costs(weights: Vec<f64>) -> Self {
        let m = weights.len();
        Self {
            weights,
            criteria: vec![Criterion::Cost; m],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.criteria.len() || self.weights.is_empty() {
            return domain("one weight and one criterion kind per column");
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return domain("weights must be non-negative");
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return domain(format!("weights sum to {total}, expected 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopsisResult {
    pub closeness: Vec<f64>,
    /// Row indices by descending closeness, ties by row index.
    pub ranking: Vec<usize>,
    pub best: usize,
}

pub fn topsis_select(matrix: &[Vec<f64>], config: &TopsisConfig) -> Result<TopsisResult> {
    config.validate()?;
    let m = config.weights.len();
    if matrix.is_empty() {
        return domain("decision matrix has no rows");
    }
    if let Some(r) = matrix.iter().find(|r| r.len() != m) {
        return Err(Error::Dimension { expected: m, found: r.len() });
    }
    if matrix.iter().flatten().any(|v| !v.is_finite()) {
        return domain("decision matrix has non-finite entries");
    }
    let mut norms = vec![0.0; m];
    for row in matrix {
        for (n, v) in norms.iter_mut().zip(row) {
            *n += v * v;
        }
    }
    for (j, n) in norms.iter_mut().enumerate() {
        *n = n.sqrt();
        if *n == 0.0 {
            return Err(Error::Normalization(j));
        }
    }
    let weighted: Vec<Vec<f64>> = matrix
        .iter()
        .map(|row| (0..m).map(|j| config.weights[j] * row[j] / norms[j]).collect())
        .collect();
    let mut ideal = vec![0.0; m];
    let mut anti = vec![0.0; m];
    for j in 0..m {
        let col = weighted.iter().map(|r| r[j]);
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        (ideal[j], anti[j]) = match config.criteria[j] {
            Criterion::Benefit => (hi, lo),
            Criterion::Cost => (lo, hi),
        };
    }
    let dist = |r: &[f64], t: &[f64]| r.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let closeness: Vec<f64> = weighted
        .iter()
        .map(|r| {
            let (dp, dm) = (dist(r, &ideal), dist(r, &anti));
            if dp + dm == 0.0 {
                1.0
            } else {
                dm / (dp + dm)
            }
        })
        .collect();
    let mut ranking: Vec<usize> = (0..matrix.len()).collect();
    ranking.sort_by(|&a, &b| closeness[b].total_cmp(&closeness[a]).then(a.cmp(&b)));
    Ok(TopsisResult {
        best: ranking[0],
        closeness,
        ranking,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two() {
        let r = topsis_select(&[vec![1.0, 2.0], vec![2.0, 1.0]], &TopsisConfig::costs(vec![0.7, 0.3])).unwrap();
        assert!((r.closeness[0] - 0.7).abs() < 1e-12);
        assert!((r.closeness[1] - 0.3).abs() < 1e-12);
        assert_eq!(r.best, 0);
    }

    #[test]
    fn singleton_and_errors() {
        let r = topsis_select(&[vec![1.0, 2.0, 3.0, 4.0]], &TopsisConfig::default()).unwrap();
        assert_eq!((r.best, r.closeness[0]), (0, 1.0));
        let zero = topsis_select(&[vec![1.0, 0.0], vec![2.0, 0.0]], &TopsisConfig::costs(vec![0.5, 0.5]));
        assert!(matches!(zero, Err(Error::Normalization(1))));
        assert!(topsis_select(&[vec![1.0]], &TopsisConfig::costs(vec![0.9])).is_err());
    }

    #[test]
    fn benefit_criteria_flip_preference() {
        let cfg = TopsisConfig {
            weights: vec![1.0],
            criteria: vec![Criterion::Benefit],
        };
        assert_eq!(topsis_select(&[vec![1.0], vec![3.0]], &cfg).unwrap().best, 1);
    }

    proptest! {
        #[test]
        fn scale_invariant(rows in prop::collection::vec(prop::collection::vec(0.1f64..10.0, 3), 1..12), s in prop::collection::vec(0.01f64..100.0, 3)) {
            let cfg = TopsisConfig::costs(vec![0.5, 0.3, 0.2]);
            let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&s).map(|(a, b)| a * b).collect()).collect();
            let (a, b) = (topsis_select(&rows, &cfg).unwrap(), topsis_select(&scaled, &cfg).unwrap());
            for (x, y) in a.closeness.iter().zip(&b.closeness) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert!((0.0..=1.0).contains(&a.closeness[a.best]));
        }
    }
}
