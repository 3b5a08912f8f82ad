use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{disparity_impact_ratio, normalized_gini, objective_vector, rmse, FairnessReport, NeighborPairs, ObjectiveVector};
use crate::causalforest::{causal_forest_fit_matrix, ite_summary, CausalForestParams, IteDistribution};
use crate::datakit::{Dataset, Encoder, GowerSpace, ModelMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorConfig {
    /// Rows used for the Lipschitz and effect objectives.
    pub subsample: usize,
    pub lipschitz_quantile: f64,
    pub forest: CausalForestParams,
    pub seed: u64,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self {
            subsample: 2000,
            lipschitz_quantile: 0.95,
            forest: CausalForestParams::default(),
            seed: 0,
        }
    }
}

/// Scores predictions on a fixed table. Accuracy and disparity use every
/// row; the neighbour pairs, subsample and forest seed are fixed once so
/// that every candidate is judged on the same footing.
#[derive(Debug, Clone)]
pub struct FairnessEvaluator {
    config: EvaluatorConfig,
    y: Vec<f64>,
    in_a: Vec<bool>,
    rows: Vec<usize>,
    design: ModelMatrix,
    sub_in_a: Vec<bool>,
    pairs: NeighborPairs,
}

impl FairnessEvaluator {
    pub fn new(data: &Dataset, config: EvaluatorConfig) -> Result<Self> {
        let n = data.n_rows();
        let in_a = data.group_mask()?;
        let rows: Vec<usize> = if n > config.subsample {
            let mut r = sample(&mut ChaCha8Rng::seed_from_u64(config.seed), n, config.subsample).into_vec();
            r.sort_unstable();
            r
        } else {
            (0..n).collect()
        };
        let full = Encoder::fit(data, false)?.transform(data)?;
        let design = ModelMatrix::new(full.design.select(ndarray::Axis(0), &rows), full.column_names)?;
        let pairs = NeighborPairs::among(&GowerSpace::new(data), &rows)?;
        Ok(Self {
            config,
            y: data.target().to_vec(),
            sub_in_a: rows.iter().map(|&i| in_a[i]).collect(),
            in_a,
            rows,
            design,
            pairs,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn subsample_rows(&self) -> &[usize] {
        &self.rows
    }

    fn check(&self, yhat: &[f64]) -> Result<()> {
        if yhat.len() != self.y.len() {
            return Err(Error::Dimension {
                expected: self.y.len(),
                found: yhat.len(),
            });
        }
        Ok(())
    }

    pub fn ite_distribution(&self, yhat: &[f64]) -> Result<IteDistribution> {
        self.check(yhat)?;
        let sub: Vec<f64> = self.rows.iter().map(|&i| yhat[i]).collect();
        let forest = causal_forest_fit_matrix(&self.design, &self.sub_in_a, &sub, &self.config.forest)?;
        Ok(ite_summary(&forest))
    }

    pub fn report(&self, yhat: &[f64]) -> Result<FairnessReport> {
        self.check(yhat)?;
        let ite = self.ite_distribution(yhat)?;
        Ok(FairnessReport {
            rmse: rmse(&self.y, yhat)?,
            gini: normalized_gini(&self.y, yhat)?,
            dir: disparity_impact_ratio(yhat, &self.in_a)?,
            lipschitz_q95: self.pairs.lipschitz(yhat, self.config.lipschitz_quantile)?,
            median_ite: ite.median,
            ite_distribution: Some(ite),
        })
    }

    /// The four minimization objectives, skipping the Gini and keeping no
    /// leaf records.
    pub fn objectives(&self, yhat: &[f64]) -> Result<ObjectiveVector> {
        self.check(yhat)?;
        let report = FairnessReport {
            rmse: rmse(&self.y, yhat)?,
            gini: f64::NAN,
            dir: disparity_impact_ratio(yhat, &self.in_a)?,
            lipschitz_q95: self.pairs.lipschitz(yhat, self.config.lipschitz_quantile)?,
            median_ite: self.ite_distribution(yhat)?.median,
            ite_distribution: None,
        };
        Ok(objective_vector(&report))
    }
}
