//! Two-headed network trained on a composite accuracy plus counterfactual
//! consistency loss.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datakit::{Dataset, Encoder};
use crate::error::{domain, Result};
use crate::predictors::{mlp_train, BatchLoss, MlpModel, Optimizer, OutputActivation, TrainParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MnnParams {
    pub hidden: Vec<usize>,
    pub train: TrainParams,
    /// Seed for the weight initialization.
    pub init_seed: u64,
}

impl Default for MnnParams {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            train: TrainParams {
                epochs: 60,
                batch: 128,
                step_size: 3e-3,
                seed: 0,
                optimizer: Optimizer::Adam,
            },
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnnModel {
    pub encoder: Encoder,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// Targets are divided by this before training.
    pub y_scale: f64,
    pub lambda: f64,
    pub net: MlpModel,
}

/// Training loss split into its two terms, in squared premium units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub accuracy: f64,
    pub fairness: f64,
    pub total: f64,
}

impl MnnModel {
    /// Network inputs: standardized non-protected design plus the group
    /// indicator, optionally flipped.
    fn inputs(&self, data: &Dataset, flip: bool) -> Result<Array2<f64>> {
        network_inputs(&self.encoder, &self.center, &self.scale, data, flip)
    }

    /// Deployed premium: real head on the observed row.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let x = self.inputs(data, false)?;
        Ok(self.net.forward(x.view())?[0].column(0).iter().map(|v| v * self.y_scale).collect())
    }

    /// Counterfactual head on the row with its group flipped.
    pub fn predict_counterfactual(&self, data: &Dataset) -> Result<Vec<f64>> {
        let x = self.inputs(data, true)?;
        Ok(self.net.forward(x.view())?[1].column(0).iter().map(|v| v * self.y_scale).collect())
    }

    /// Mean `|f_real(x) - f_cf(x')|` in premium units.
    pub fn disparity(&self, data: &Dataset) -> Result<f64> {
        let real = self.predict(data)?;
        let cf = self.predict_counterfactual(data)?;
        Ok(real.iter().zip(&cf).map(|(a, b)| (a - b).abs()).sum::<f64>() / real.len() as f64)
    }

    pub fn loss_parts(&self, data: &Dataset) -> Result<LossParts> {
        let real = self.predict(data)?;
        let cf = self.predict_counterfactual(data)?;
        let y = data.target();
        let n = y.len() as f64;
        let accuracy = y.iter().zip(&real).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        let fairness = real.iter().zip(&cf).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        Ok(LossParts {
            accuracy,
            fairness,
            total: accuracy + self.lambda * fairness,
        })
    }
}

fn network_inputs(encoder: &Encoder, center: &[f64], scale: &[f64], data: &Dataset, flip: bool) -> Result<Array2<f64>> {
    let mm = encoder.transform(data)?;
    let d = data.group_indicator()?;
    let p = mm.ncols();
    let mut x = Array2::<f64>::zeros((mm.nrows(), p + 1));
    for (i, row) in mm.design.rows().into_iter().enumerate() {
        for j in 0..p {
            x[[i, j]] = (row[j] - center[j]) / scale[j];
        }
        x[[i, p]] = if flip { 1.0 - d[i] } else { d[i] };
    }
    Ok(x)
}

/// `mean (y - f_real(x))^2 + lambda * mean (f_real(x) - f_cf(x'))^2`.
pub struct CompositeLoss<'a> {
    pub x: ArrayView2<'a, f64>,
    pub x_cf: ArrayView2<'a, f64>,
    pub y: &'a [f64],
    pub lambda: f64,
}

impl CompositeLoss<'_> {
    /// Loss from already computed head outputs.
    pub fn value(y: &[f64], real: &[f64], cf: &[f64], lambda: f64) -> f64 {
        let n = y.len() as f64;
        let acc: f64 = y.iter().zip(real).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        let fair: f64 = real.iter().zip(cf).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        acc + lambda * fair
    }
}

impl BatchLoss for CompositeLoss<'_> {
    fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn loss_and_grad(&self, model: &MlpModel, rows: &[usize]) -> Result<(f64, Vec<f64>)> {
        let m = rows.len() as f64;
        let xb = self.x.select(Axis(0), rows);
        let xcb = self.x_cf.select(Axis(0), rows);
        let real_pass = model.forward_cached(xb.view())?;
        let cf_pass = model.forward_cached(xcb.view())?;
        let real = &real_pass.outputs[0];
        let cf = &cf_pass.outputs[1];
        let mut d_real = Array2::<f64>::zeros(real.raw_dim());
        let mut d_cf = Array2::<f64>::zeros(cf.raw_dim());
        let mut loss = 0.0;
        for (k, &r) in rows.iter().enumerate() {
            let e = real[[k, 0]] - self.y[r];
            let gap = real[[k, 0]] - cf[[k, 0]];
            loss += (e * e + self.lambda * gap * gap) / m;
            d_real[[k, 0]] = 2.0 * e / m + 2.0 * self.lambda * gap / m;
            d_cf[[k, 0]] = -2.0 * self.lambda * gap / m;
        }
        let zeros = Array2::<f64>::zeros(real.raw_dim());
        let mut grad = model.backward(&real_pass, &[d_real, zeros.clone()]);
        if self.lambda != 0.0 {
            let g_cf = model.backward(&cf_pass, &[zeros, d_cf]);
            for (a, b) in grad.iter_mut().zip(&g_cf) {
                *a += b;
            }
        }
        Ok((loss, grad))
    }
}

#[derive(Debug, Clone)]
pub struct MnnFit {
    pub model: MnnModel,
    pub loss: LossParts,
    /// Full-data composite loss (scaled targets) per epoch.
    pub history: Vec<f64>,
}

pub fn fit_mnn(data: &Dataset, lambda: f64, params: &MnnParams) -> Result<MnnFit> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return domain(format!("lambda {lambda} must be finite and non-negative"));
    }
    let encoder = Encoder::fit(data, false)?;
    let mm = encoder.transform(data)?;
    let p = mm.ncols();
    let mut center = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let col = mm.design.column(j).to_vec();
        center[j] = crate::stats::mean(&col);
        let sd = crate::stats::std_dev(&col);
        scale[j] = if sd > 0.0 { sd } else { 1.0 };
    }
    let y = data.target();
    let y_scale = crate::stats::mean(y);
    if !(y_scale > 0.0) {
        return domain("network target needs a positive mean");
    }
    let ys: Vec<f64> = y.iter().map(|v| v / y_scale).collect();
    let x = network_inputs(&encoder, &center, &scale, data, false)?;
    let x_cf = network_inputs(&encoder, &center, &scale, data, true)?;

    let mut sizes = vec![p + 1];
    sizes.extend(&params.hidden);
    sizes.push(1);
    let mut net = MlpModel::new(&sizes, 2, OutputActivation::Softplus, params.init_seed)?;
    // start both heads at the mean premium: softplus(ln(e - 1)) = 1
    let start = (std::f64::consts::E - 1.0).ln();
    for head in 0..2 {
        let idx = net.output_bias_index(head, 0);
        net.params[idx] = start;
    }
    let loss = CompositeLoss {
        x: x.view(),
        x_cf: x_cf.view(),
        y: &ys,
        lambda,
    };
    let (net, report) = mlp_train(&net, &loss, &params.train)?;
    let model = MnnModel {
        encoder,
        center,
        scale,
        y_scale,
        lambda,
        net,
    };
    let parts = model.loss_parts(data)?;
    Ok(MnnFit {
        model,
        loss: parts,
        history: report.loss_history,
    })
}

/// Fold index of every row, stratified by group.
pub fn stratified_folds(groups: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return domain("cross-validation needs at least 2 folds");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; groups.len()];
    let mut offset = 0;
    for g in [true, false] {
        let mut idx: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        if idx.len() < folds {
            return domain(format!("a group has {} rows, fewer than {folds} folds", idx.len()));
        }
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            out[i] = (k + offset) % folds;
        }
        offset += groups.iter().filter(|&&x| x == g).count();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub validation_loss: f64,
    pub disparity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTuning {
    pub lambda_star: f64,
    pub scores: Vec<LambdaScore>,
    pub folds: Vec<usize>,
}

/// Cross-validated choice of the fairness penalty.
///
/// `lambda_star` is the smallest grid value whose validation loss is within
/// 5% of the best and whose disparity is within 10% of the lowest; when no
/// value meets both, the lowest-disparity value among those within 5% of the
/// best loss is taken.
pub fn tune_lambda(data: &Dataset, grid: &[f64], folds: usize, params: &MnnParams, seed: u64) -> Result<LambdaTuning> {
    if grid.is_empty() {
        return domain("lambda grid is empty");
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return domain(format!("lambda {bad} must be finite and non-negative"));
    }
    let assignment = stratified_folds(&data.group_mask()?, folds, seed)?;
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut loss_sum = 0.0;
        let mut disp_sum = 0.0;
        for f in 0..folds {
            let train: Vec<usize> = (0..data.n_rows()).filter(|&i| assignment[i] != f).collect();
            let valid: Vec<usize> = (0..data.n_rows()).filter(|&i| assignment[i] == f).collect();
            let fit = fit_mnn(&data.subset(&train), lambda, params)?;
            let vdata = data.subset(&valid);
            let pred = fit.model.predict(&vdata)?;
            let y = vdata.target();
            loss_sum += y.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
            disp_sum += fit.model.disparity(&vdata)?;
        }
        scores.push(LambdaScore {
            lambda,
            validation_loss: loss_sum / folds as f64,
            disparity: disp_sum / folds as f64,
        });
    }
    let lambda_star = select_lambda(&scores);
    Ok(LambdaTuning {
        lambda_star,
        scores,
        folds: assignment,
    })
}

fn select_lambda(scores: &[LambdaScore]) -> f64 {
    let min_loss = scores.iter().map(|s| s.validation_loss).fold(f64::INFINITY, f64::min);
    let min_disp = scores.iter().map(|s| s.disparity).fold(f64::INFINITY, f64::min);
    let mut by_lambda: Vec<&LambdaScore> = scores.iter().collect();
    by_lambda.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let near_best = |s: &LambdaScore| s.validation_loss <= 1.05 * min_loss;
    if let Some(s) = by_lambda.iter().find(|s| near_best(s) && s.disparity <= 1.10 * min_disp) {
        return s.lambda;
    }
    by_lambda
        .iter()
        .filter(|s| near_best(s))
        .min_by(|a, b| a.disparity.total_cmp(&b.disparity))
        .map(|s| s.lambda)
        .unwrap_or(by_lambda[0].lambda)
}
