//! Honest causal trees over model predictions: each leaf reports the gap in
//! mean prediction between the two groups, estimated on rows that played no
//! part in choosing the splits.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datakit::{Dataset, Encoder, ModelMatrix};
use crate::error::{domain, Error, Result};
use crate::stats::{quantile_sorted, weighted_median};

pub const DEFAULT_HISTOGRAM_BINS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CausalForestParams {
    pub n_trees: usize,
    /// Minimum rows of each group in every leaf, in both halves.
    pub min_group: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for CausalForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_group: 5,
            max_depth: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalLeaf {
    pub ite: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Estimation rows that landed in this leaf.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum CausalNode {
    Leaf {
        leaf: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<CausalNode>,
        right: Box<CausalNode>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalTree {
    pub root: CausalNode,
    pub leaves: Vec<CausalLeaf>,
    pub structure_rows: Vec<usize>,
}

impl CausalTree {
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                CausalNode::Leaf { leaf } => return *leaf,
                CausalNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalForest {
    pub params: CausalForestParams,
    pub column_names: Vec<String>,
    pub trees: Vec<CausalTree>,
}

/// `mean(a) - mean(b)`.
pub fn leaf_ite(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return domain("leaf needs at least one row from each group");
    }
    Ok(a.iter().sum::<f64>() / a.len() as f64 - b.iter().sum::<f64>() / b.len() as f64)
}

/// Fits on the non-protected features of `data`; `data` must carry the
/// sensitive column.
pub fn causal_forest_fit(data: &Dataset, predictions: &[f64], params: &CausalForestParams) -> Result<CausalForest> {
    let mm = Encoder::fit(data, false)?.transform(data)?;
    causal_forest_fit_matrix(&mm, &data.group_mask()?, predictions, params)
}

pub fn causal_forest_fit_matrix(
    mm: &ModelMatrix,
    in_a: &[bool],
    predictions: &[f64],
    params: &CausalForestParams,
) -> Result<CausalForest> {
    let n = mm.nrows();
    if in_a.len() != n {
        return Err(Error::Dimension { expected: n, found: in_a.len() });
    }
    if predictions.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: predictions.len(),
        });
    }
    if predictions.iter().any(|v| !v.is_finite()) {
        return domain("predictions must be finite");
    }
    if params.n_trees == 0 || params.min_group == 0 {
        return domain("n_trees and min_group must be positive");
    }
    let n_a = in_a.iter().filter(|a| **a).count();
    let n_b = n - n_a;
    if n_a.min(n_b) < 2 * params.min_group {
        return domain(format!(
            "groups of size ({n_a}, {n_b}) are too small for min_group {}",
            params.min_group
        ));
    }
    let ctx = Ctx {
        x: mm,
        in_a,
        y: predictions,
        params,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            ctx.grow_tree(&mut rng)
        })
        .collect();
    Ok(CausalForest {
        params: *params,
        column_names: mm.column_names.clone(),
        trees,
    })
}

struct Ctx<'a> {
    x: &'a ModelMatrix,
    in_a: &'a [bool],
    y: &'a [f64],
    params: &'a CausalForestParams,
}

#[derive(Clone, Copy, Default)]
struct Tally {
    n_a: usize,
    n_b: usize,
    sum_a: f64,
    sum_b: f64,
}

impl Tally {
    fn add(&mut self, a: bool, y: f64) {
        if a {
            self.n_a += 1;
            self.sum_a += y;
        } else {
            self.n_b += 1;
            self.sum_b += y;
        }
    }

    fn minus(&self, o: &Tally) -> Tally {
        Tally {
            n_a: self.n_a - o.n_a,
            n_b: self.n_b - o.n_b,
            sum_a: self.sum_a - o.sum_a,
            sum_b: self.sum_b - o.sum_b,
        }
    }

    fn n(&self) -> f64 {
        (self.n_a + self.n_b) as f64
    }

    fn ite(&self) -> f64 {
        self.sum_a / self.n_a as f64 - self.sum_b / self.n_b as f64
    }

    fn admissible(&self, min_group: usize) -> bool {
        self.n_a >= min_group && self.n_b >= min_group
    }
}

impl Ctx<'_> {
    fn tally(&self, rows: &[usize]) -> Tally {
        let mut t = Tally::default();
        for &i in rows {
            t.add(self.in_a[i], self.y[i]);
        }
        t
    }

    fn grow_tree(&self, rng: &mut ChaCha8Rng) -> CausalTree {
        // one shared permutation, then alternate within each group so both
        // halves are stratified and the assignment ignores the group names
        let mut order: Vec<usize> = (0..self.y.len()).collect();
        order.shuffle(rng);
        let (mut seen_a, mut seen_b) = (0usize, 0usize);
        let mut structure = Vec::new();
        let mut estimation = Vec::new();
        for i in order {
            let k = if self.in_a[i] { &mut seen_a } else { &mut seen_b };
            if *k % 2 == 0 {
                structure.push(i);
            } else {
                estimation.push(i);
            }
            *k += 1;
        }
        structure.sort_unstable();
        estimation.sort_unstable();
        let mut leaves = Vec::new();
        let root = self.grow_node(structure.clone(), estimation, 0, &mut leaves);
        CausalTree {
            root,
            leaves,
            structure_rows: structure,
        }
    }

    fn grow_node(&self, s: Vec<usize>, e: Vec<usize>, depth: usize, leaves: &mut Vec<CausalLeaf>) -> CausalNode {
        if depth < self.params.max_depth {
            if let Some((feature, threshold)) = self.best_split(&s, &e) {
                let x = &self.x.design;
                let (sl, sr): (Vec<usize>, Vec<usize>) = s.iter().partition(|&&i| x[[i, feature]] <= threshold);
                let (el, er): (Vec<usize>, Vec<usize>) = e.iter().partition(|&&i| x[[i, feature]] <= threshold);
                let left = self.grow_node(sl, el, depth + 1, leaves);
                let right = self.grow_node(sr, er, depth + 1, leaves);
                return CausalNode::Split {
                    feature,
                    threshold,
                    left: Box::new(left),
                    right: Box::new(right),
                };
            }
        }
        let t = self.tally(&e);
        leaves.push(CausalLeaf {
            ite: t.ite(),
            n_a: t.n_a,
            n_b: t.n_b,
            mean_a: t.sum_a / t.n_a as f64,
            mean_b: t.sum_b / t.n_b as f64,
            rows: e,
        });
        CausalNode::Leaf { leaf: leaves.len() - 1 }
    }

    fn best_split(&self, s: &[usize], e: &[usize]) -> Option<(usize, f64)> {
        let min_group = self.params.min_group;
        let x = &self.x.design;
        let total_s = self.tally(s);
        let total_e = self.tally(e);
        let parent = total_s.ite();
        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..x.ncols() {
            let mut ss = s.to_vec();
            ss.sort_by(|&a, &b| x[[a, j]].total_cmp(&x[[b, j]]));
            let mut es = e.to_vec();
            es.sort_by(|&a, &b| x[[a, j]].total_cmp(&x[[b, j]]));
            let mut left_s = Tally::default();
            let mut left_e = Tally::default();
            let mut p = 0;
            for k in 0..ss.len() - 1 {
                let i = ss[k];
                left_s.add(self.in_a[i], self.y[i]);
                let (v, next) = (x[[i, j]], x[[ss[k + 1], j]]);
                if v == next {
                    continue;
                }
                let threshold = 0.5 * (v + next);
                while p < es.len() && x[[es[p], j]] <= threshold {
                    left_e.add(self.in_a[es[p]], 0.0);
                    p += 1;
                }
                let right_s = total_s.minus(&left_s);
                let right_e = total_e.minus(&left_e);
                if !(left_s.admissible(min_group)
                    && right_s.admissible(min_group)
                    && left_e.admissible(min_group)
                    && right_e.admissible(min_group))
                {
                    continue;
                }
                let gain =
                    left_s.n() * (left_s.ite() - parent).powi(2) + right_s.n() * (right_s.ite() - parent).powi(2);
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, j, threshold));
                }
            }
        }
        best.map(|(_, j, t)| (j, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafWeighting {
    /// Every leaf counts once.
    #[default]
    Unweighted,
    /// Leaves count by their estimation row count.
    LeafSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafRecord {
    pub leaf_ite: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub tree_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Fixed-width bins spanning `[min, max]` of the sample.
    pub fn new(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() || bins == 0 {
            return domain("histogram needs values and at least one bin");
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let k = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
            counts[k.min(bins - 1)] += 1;
        }
        Ok(Self { lo, hi, counts })
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IteDistribution {
    pub leaves: Vec<LeafRecord>,
    pub weighting: LeafWeighting,
    pub median: f64,
    /// Quantiles at 0.1, 0.2, ..., 0.9.
    pub deciles: Vec<f64>,
    pub histogram: Histogram,
}

#[derive(Serialize)]
struct SummaryView<'a> {
    n_leaves: usize,
    weighting: LeafWeighting,
    median: f64,
    deciles: &'a [f64],
    histogram: &'a Histogram,
}

impl IteDistribution {
    pub fn ites(&self) -> Vec<f64> {
        self.leaves.iter().map(|l| l.leaf_ite).collect()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let mut v = self.ites();
        v.sort_by(f64::total_cmp);
        quantile_sorted(&v, p)
    }

    pub fn interquartile_range(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for l in &self.leaves {
            w.serialize(l)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Summary without the per-leaf records.
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SummaryView {
            n_leaves: self.leaves.len(),
            weighting: self.weighting,
            median: self.median,
            deciles: &self.deciles,
            histogram: &self.histogram,
        })?)
    }
}

pub fn ite_summary(forest: &CausalForest) -> IteDistribution {
    ite_summary_with(forest, LeafWeighting::Unweighted, DEFAULT_HISTOGRAM_BINS)
}

pub fn ite_summary_with(forest: &CausalForest, weighting: LeafWeighting, bins: usize) -> IteDistribution {
    let leaves: Vec<LeafRecord> = forest
        .trees
        .iter()
        .enumerate()
        .flat_map(|(t, tree)| {
            tree.leaves.iter().map(move |l| LeafRecord {
                leaf_ite: l.ite,
                n_a: l.n_a,
                n_b: l.n_b,
                tree_id: t,
            })
        })
        .collect();
    let mut sorted: Vec<f64> = leaves.iter().map(|l| l.leaf_ite).collect();
    let histogram = Histogram::new(&sorted, bins.max(1)).expect("a fitted forest has leaves");
    sorted.sort_by(f64::total_cmp);
    let median = match weighting {
        LeafWeighting::Unweighted => quantile_sorted(&sorted, 0.5),
        LeafWeighting::LeafSize => {
            let v: Vec<f64> = leaves.iter().map(|l| l.leaf_ite).collect();
            let w: Vec<f64> = leaves.iter().map(|l| (l.n_a + l.n_b) as f64).collect();
            weighted_median(&v, &w).expect("leaves carry rows")
        }
    };
    let deciles = (1..10).map(|k| quantile_sorted(&sorted, k as f64 / 10.0)).collect();
    IteDistribution {
        leaves,
        weighting,
        median,
        deciles,
        histogram,
    }
}
