//! Small fully connected networks with ReLU hidden layers and optional
//! second output head sharing the trunk.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Identity,
    Softplus,
    Logistic,
}

impl OutputActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Softplus => softplus(z),
            OutputActivation::Logistic => logistic(z),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Softplus => logistic(z),
            OutputActivation::Logistic => {
                let s = logistic(z);
                s * (1.0 - s)
            }
        }
    }
}

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.max(0.0) + (-z.abs()).exp().ln_1p()
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Input width, hidden widths, output width.
    pub layer_sizes: Vec<usize>,
    pub heads: usize,
    pub output: OutputActivation,
    /// Per layer: weights row-major `[fan_out][fan_in]`, then `fan_out` biases.
    /// Trunk layers come first, then one final layer per head.
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    offset: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Layer {
    fn bias_offset(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }
}

/// Cached activations from a forward pass, consumed by [`MlpModel::backward`].
pub struct ForwardCache {
    // trunk_pre[l] is the pre-activation of trunk layer l; acts[0] is the input
    trunk_pre: Vec<Array2<f64>>,
    acts: Vec<Array2<f64>>,
    head_pre: Vec<Array2<f64>>,
    pub outputs: Vec<Array2<f64>>,
}

impl MlpModel {
    pub fn n_params(layer_sizes: &[usize], heads: usize) -> usize {
        let l = layer_sizes.len();
        let trunk: usize = layer_sizes[..l - 1].windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        trunk + heads * (layer_sizes[l - 2] + 1) * layer_sizes[l - 1]
    }

    pub fn zeros(layer_sizes: &[usize], heads: usize, output: OutputActivation) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return domain("an MLP needs at least input and output widths, all positive");
        }
        if heads == 0 || heads > 2 {
            return domain("an MLP has one or two heads");
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            heads,
            output,
            params: vec![0.0; Self::n_params(layer_sizes, heads)],
        })
    }

    /// He-normal weights, zero biases.
    pub fn new(layer_sizes: &[usize], heads: usize, output: OutputActivation, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(layer_sizes, heads, output)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers: Vec<Layer> = m.layers();
        for layer in layers {
            let normal = Normal::new(0.0, (2.0 / layer.fan_in as f64).sqrt()).expect("positive sd");
            for v in &mut m.params[layer.offset..layer.bias_offset()] {
                *v = normal.sample(&mut rng);
            }
        }
        Ok(m)
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                found: params.len(),
            });
        }
        self.params = params;
        Ok(self)
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    fn layers(&self) -> Vec<Layer> {
        let s = &self.layer_sizes;
        let l = s.len();
        let mut out = Vec::new();
        let mut offset = 0;
        for w in s[..l - 1].windows(2) {
            out.push(Layer {
                offset,
                fan_in: w[0],
                fan_out: w[1],
            });
            offset += (w[0] + 1) * w[1];
        }
        for _ in 0..self.heads {
            out.push(Layer {
                offset,
                fan_in: s[l - 2],
                fan_out: s[l - 1],
            });
            offset += (s[l - 2] + 1) * s[l - 1];
        }
        out
    }

    fn n_trunk(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    /// Parameter index of the bias of output unit `unit` in head `head`.
    pub fn output_bias_index(&self, head: usize, unit: usize) -> usize {
        let layer = self.layers()[self.n_trunk() + head];
        layer.bias_offset() + unit
    }

    fn affine(&self, layer: Layer, a: &ArrayView2<'_, f64>) -> Array2<f64> {
        let w = ArrayView2::from_shape((layer.fan_out, layer.fan_in), &self.params[layer.offset..layer.bias_offset()])
            .expect("layer shape");
        let b = &self.params[layer.bias_offset()..layer.bias_offset() + layer.fan_out];
        let mut z = a.dot(&w.t());
        for mut row in z.rows_mut() {
            for (v, bj) in row.iter_mut().zip(b) {
                *v += bj;
            }
        }
        z
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_width() {
            return Err(Error::Dimension {
                expected: self.input_width(),
                found: x.ncols(),
            });
        }
        let layers = self.layers();
        let nt = self.n_trunk();
        let mut acts = vec![x.to_owned()];
        let mut trunk_pre = Vec::with_capacity(nt);
        for layer in &layers[..nt] {
            let z = self.affine(*layer, &acts.last().expect("input").view());
            acts.push(z.mapv(|v| v.max(0.0)));
            trunk_pre.push(z);
        }
        let top = acts.last().expect("input").view();
        let mut head_pre = Vec::with_capacity(self.heads);
        let mut outputs = Vec::with_capacity(self.heads);
        for layer in &layers[nt..] {
            let z = self.affine(*layer, &top);
            outputs.push(z.mapv(|v| self.output.apply(v)));
            head_pre.push(z);
        }
        Ok(ForwardCache {
            trunk_pre,
            acts,
            head_pre,
            outputs,
        })
    }

    /// Output matrix (`rows x output width`) of every head.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
        Ok(self.forward_cached(x)?.outputs)
    }

    /// First output unit of head 0, one value per row.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.forward(x)?[0].column(0).to_vec())
    }

    /// Gradient of a scalar loss with respect to `params`, given the loss
    /// gradient with respect to each head's outputs.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[Array2<f64>]) -> Vec<f64> {
        let layers = self.layers();
        let nt = self.n_trunk();
        let mut grad = vec![0.0; self.params.len()];
        let top = &cache.acts[nt];
        let mut d_top = Array2::<f64>::zeros(top.raw_dim());
        for (head, layer) in layers[nt..].iter().enumerate() {
            let dz = &d_out[head] * &cache.head_pre[head].mapv(|z| self.output.derivative(z));
            self.accumulate(&mut grad, *layer, &dz, top);
            d_top = d_top + dz.dot(&self.weights(*layer));
        }
        let mut d_act = d_top;
        for l in (0..nt).rev() {
            let mask = cache.trunk_pre[l].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            let dz = d_act * mask;
            self.accumulate(&mut grad, layers[l], &dz, &cache.acts[l]);
            d_act = dz.dot(&self.weights(layers[l]));
        }
        grad
    }

    fn weights(&self, layer: Layer) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((layer.fan_out, layer.fan_in), &self.params[layer.offset..layer.bias_offset()])
            .expect("layer shape")
    }

    fn accumulate(&self, grad: &mut [f64], layer: Layer, dz: &Array2<f64>, a: &Array2<f64>) {
        let dw = dz.t().dot(a);
        for (g, v) in grad[layer.offset..layer.bias_offset()].iter_mut().zip(dw.iter()) {
            *g += v;
        }
        let db = dz.sum_axis(Axis(0));
        for (g, v) in grad[layer.bias_offset()..layer.bias_offset() + layer.fan_out].iter_mut().zip(db.iter()) {
            *g += v;
        }
    }
}

pub fn mlp_forward(m: &MlpModel, x: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
    m.forward(x)
}

/// Objective minimized by [`mlp_train`], evaluated on a subset of rows.
pub trait BatchLoss: Sync {
    fn n_rows(&self) -> usize;

    /// Loss on `rows` and its gradient with respect to the parameters.
    fn loss_and_grad(&self, model: &MlpModel, rows: &[usize]) -> Result<(f64, Vec<f64>)>;

    fn loss(&self, model: &MlpModel, rows: &[usize]) -> Result<f64> {
        Ok(self.loss_and_grad(model, rows)?.0)
    }
}

/// Mean squared error of head 0's first output.
pub struct MseLoss<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: &'a [f64],
}

impl BatchLoss for MseLoss<'_> {
    fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn loss_and_grad(&self, model: &MlpModel, rows: &[usize]) -> Result<(f64, Vec<f64>)> {
        let xb = self.x.select(Axis(0), rows);
        let cache = model.forward_cached(xb.view())?;
        let out = &cache.outputs[0];
        let m = rows.len() as f64;
        let mut d = Array2::<f64>::zeros(out.raw_dim());
        let mut loss = 0.0;
        for (k, &r) in rows.iter().enumerate() {
            let e = out[[k, 0]] - self.y[r];
            loss += e * e / m;
            d[[k, 0]] = 2.0 * e / m;
        }
        let mut d_out = vec![d];
        for _ in 1..model.heads {
            d_out.push(Array2::zeros(out.raw_dim()));
        }
        Ok((loss, model.backward(&cache, &d_out)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch: usize,
    pub step_size: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch: 256,
            step_size: 1e-3,
            seed: 0,
            optimizer: Optimizer::Adam,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Full-data loss before training and after each epoch.
    pub loss_history: Vec<f64>,
}

/// Mini-batch training with a seeded row shuffle each epoch.
pub fn mlp_train(model: &MlpModel, loss: &dyn BatchLoss, params: &TrainParams) -> Result<(MlpModel, TrainReport)> {
    let n = loss.n_rows();
    if n == 0 {
        return domain("no training rows");
    }
    if params.batch == 0 {
        return domain("batch size must be positive");
    }
    if !(params.step_size >= 0.0) || !params.step_size.is_finite() {
        return domain("step size must be finite and non-negative");
    }
    let mut m = model.clone();
    let all: Vec<usize> = (0..n).collect();
    let initial = loss.loss(&m, &all)?;
    if !initial.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let mut history = vec![initial];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let k = m.params.len();
    let (mut m1, mut m2) = (vec![0.0; k], vec![0.0; k]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut t = 0i32;
    let mut order = all.clone();
    for epoch in 1..=params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch) {
            let (l, g) = loss.loss_and_grad(&m, batch)?;
            if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            t += 1;
            match params.optimizer {
                Optimizer::Sgd => {
                    for (p, gi) in m.params.iter_mut().zip(&g) {
                        *p -= params.step_size * gi;
                    }
                }
                Optimizer::Adam => {
                    let c1 = 1.0 - b1.powi(t);
                    let c2 = 1.0 - b2.powi(t);
                    for i in 0..k {
                        m1[i] = b1 * m1[i] + (1.0 - b1) * g[i];
                        m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i];
                        m.params[i] -= params.step_size * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
        let full = loss.loss(&m, &all)?;
        if !full.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(full);
    }
    Ok((m, TrainReport { loss_history: history }))
}
