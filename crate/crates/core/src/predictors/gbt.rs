use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, presort, GrowParams, Tree};
use crate::datakit::ModelMatrix;
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GbtLoss {
    SquaredError,
    /// Log link; accepts any non-negative target.
    PoissonDeviance,
    /// Log link; needs strictly positive targets.
    GammaDeviance,
}

impl GbtLoss {
    fn check(self, y: &[f64]) -> Result<()> {
        for (i, &v) in y.iter().enumerate() {
            let ok = match self {
                GbtLoss::SquaredError => v.is_finite(),
                GbtLoss::PoissonDeviance => v.is_finite() && v >= 0.0,
                GbtLoss::GammaDeviance => v.is_finite() && v > 0.0,
            };
            if !ok {
                return domain(format!("target value {v} at row {i} invalid for {self:?}"));
            }
        }
        if self != GbtLoss::SquaredError && y.iter().sum::<f64>() <= 0.0 {
            return domain("deviance losses need a positive mean target");
        }
        Ok(())
    }

    fn inverse_link(self, raw: f64) -> f64 {
        match self {
            GbtLoss::SquaredError => raw,
            _ => raw.exp(),
        }
    }

    fn link(self, mu: f64) -> f64 {
        match self {
            GbtLoss::SquaredError => mu,
            _ => mu.ln(),
        }
    }

    /// Gradient and hessian of the per-row loss with respect to the raw score.
    fn grad_hess(self, y: f64, raw: f64) -> (f64, f64) {
        match self {
            GbtLoss::SquaredError => (raw - y, 1.0),
            GbtLoss::PoissonDeviance => {
                let mu = raw.exp();
                (mu - y, mu)
            }
            GbtLoss::GammaDeviance => {
                let r = y * (-raw).exp();
                (1.0 - r, r)
            }
        }
    }

    /// Mean training loss (half squared error or mean unit deviance).
    fn mean_loss(self, y: &[f64], raw: &[f64]) -> f64 {
        let total: f64 = y
            .iter()
            .zip(raw)
            .map(|(&y, &f)| match self {
                GbtLoss::SquaredError => 0.5 * (y - f) * (y - f),
                GbtLoss::PoissonDeviance => {
                    let mu = f.exp();
                    let t = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                    2.0 * (t - (y - mu))
                }
                GbtLoss::GammaDeviance => {
                    let r = y * (-f).exp();
                    2.0 * (r - 1.0 - r.ln())
                }
            })
            .sum();
        total / y.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub lambda_l2: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 4,
            learning_rate: 0.1,
            min_leaf: 20,
            lambda_l2: 1.0,
        }
    }
}

impl GbtParams {
    fn validate(&self, n: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return domain(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        if self.min_leaf == 0 {
            return domain("min_leaf must be at least 1");
        }
        if !(self.lambda_l2 >= 0.0) || !self.lambda_l2.is_finite() {
            return domain("lambda_l2 must be finite and non-negative");
        }
        if n < 2 * self.min_leaf {
            return domain(format!("{n} rows is fewer than 2 * min_leaf = {}", 2 * self.min_leaf));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub loss: GbtLoss,
    pub learning_rate: f64,
    /// Initial prediction on the response scale.
    pub base_score: f64,
    /// Trees with shrinkage already folded into the leaf values.
    pub trees: Vec<Tree>,
    pub n_features: usize,
    /// Mean training loss before the first round and after every round.
    pub loss_history: Vec<f64>,
}

impl GbtModel {
    pub fn raw_scores(&self, mm: &ModelMatrix) -> Result<Vec<f64>> {
        if mm.ncols() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                found: mm.ncols(),
            });
        }
        let base = self.loss.link(self.base_score);
        Ok(mm
            .design
            .rows()
            .into_iter()
            .map(|r| base + self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>())
            .collect())
    }

    pub fn predict(&self, mm: &ModelMatrix) -> Result<Vec<f64>> {
        Ok(self
            .raw_scores(mm)?
            .into_iter()
            .map(|f| self.loss.inverse_link(f))
            .collect())
    }
}

pub fn gbt_predict(m: &GbtModel, mm: &ModelMatrix) -> Result<Vec<f64>> {
    m.predict(mm)
}

pub fn gbt_fit(mm: &ModelMatrix, y: &[f64], loss: GbtLoss, params: &GbtParams) -> Result<GbtModel> {
    let n = mm.nrows();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, found: y.len() });
    }
    params.validate(n)?;
    loss.check(y)?;

    let base_score = y.iter().sum::<f64>() / n as f64;
    let x = &mm.design;
    let sorted = presort(x);
    let mut raw = vec![loss.link(base_score); n];
    let mut history = vec![loss.mean_loss(y, &raw)];
    let ones = vec![1.0; n];
    let grow_params = GrowParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf as f64,
        lambda: params.lambda_l2,
        mtry: None,
    };
    // no feature subsampling, so the generator is never consulted
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut trees = Vec::with_capacity(params.n_trees);
    for round in 0..params.n_trees {
        let (g, h): (Vec<f64>, Vec<f64>) = y.iter().zip(&raw).map(|(&y, &f)| loss.grad_hess(y, f)).unzip();
        let grown = grow(x, &sorted, &g, &h, &ones, grow_params, &mut rng);
        let mut tree = grown.tree;
        let prev = *history.last().expect("non-empty");
        // shrink the Newton step; halve further if the round would raise the loss
        let mut factor = params.learning_rate;
        let mut candidate: Vec<f64>;
        let mut cur;
        let mut halvings = 0;
        loop {
            candidate = raw.iter().zip(&grown.row_values).map(|(f, v)| f + factor * v).collect();
            cur = loss.mean_loss(y, &candidate);
            if cur <= prev || halvings >= 40 {
                break;
            }
            factor *= 0.5;
            halvings += 1;
        }
        if !cur.is_finite() {
            return Err(Error::Divergence { epoch: round });
        }
        if cur > prev {
            // no improving step exists along this tree
            factor = 0.0;
            cur = prev;
            candidate = raw.clone();
        }
        tree.scale(factor);
        raw = candidate;
        history.push(cur);
        trees.push(tree);
    }
    Ok(GbtModel {
        loss,
        learning_rate: params.learning_rate,
        base_score,
        trees,
        n_features: mm.ncols(),
        loss_history: history,
    })
}
