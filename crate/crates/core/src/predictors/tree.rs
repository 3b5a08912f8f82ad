//! Level-wise exact greedy regression trees driven by per-row gradient and
//! hessian statistics; shared by the boosting and forest engines.

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: Node,
}

impl Tree {
    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        fn count(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        fn walk(n: &mut Node, f: f64) {
            match n {
                Node::Leaf { value } => *value *= f,
                Node::Split { left, right, .. } => {
                    walk(left, f);
                    walk(right, f);
                }
            }
        }
        walk(&mut self.root, factor);
    }
}

/// Row indices of each column sorted by value (ties by row index).
pub(crate) fn presort(x: &Array2<f64>) -> Vec<Vec<u32>> {
    (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let col = x.column(j);
            let mut idx: Vec<u32> = (0..x.nrows() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    /// Minimum total row weight in each child.
    pub min_leaf: f64,
    pub lambda: f64,
    /// Features tried per node; `None` tries all.
    pub mtry: Option<usize>,
}

pub(crate) struct Grown {
    pub tree: Tree,
    /// Total split gain credited to each feature.
    pub gains: Vec<f64>,
    /// Leaf value reached by each in-sample row (NaN for zero-weight rows).
    pub row_values: Vec<f64>,
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    w: f64,
}

impl Stats {
    fn add(&mut self, g: f64, h: f64, w: f64) {
        self.g += g;
        self.h += h;
        self.w += w;
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct ArenaNode {
    stats: Stats,
    split: Option<(usize, f64, usize, usize)>,
}

const NONE: u32 = u32::MAX;

/// Grows one tree on gradient `g`, hessian `h` and row weights `w` (all
/// already per-row; a row with `w == 0` is out of sample). Leaf values are the
/// unshrunk Newton steps `-G / (H + lambda)`.
pub(crate) fn grow<R: Rng>(
    x: &Array2<f64>,
    sorted: &[Vec<u32>],
    g: &[f64],
    h: &[f64],
    w: &[f64],
    params: GrowParams,
    rng: &mut R,
) -> Grown {
    let n = x.nrows();
    let p = x.ncols();
    let lambda = params.lambda;
    let score = |s: &Stats| s.g * s.g / (s.h + lambda);

    let mut root = Stats::default();
    let mut node_of = vec![NONE; n];
    for i in 0..n {
        if w[i] > 0.0 {
            root.add(g[i] * w[i], h[i] * w[i], w[i]);
            node_of[i] = 0;
        }
    }
    let mut arena = vec![ArenaNode { stats: root, split: None }];
    let mut gains = vec![0.0; p];
    let mut frontier: Vec<usize> = vec![0];

    for _depth in 0..params.max_depth {
        // nodes that could still be split, keyed by arena id
        let open: Vec<usize> = frontier
            .iter()
            .copied()
            .filter(|&k| arena[k].stats.w >= 2.0 * params.min_leaf)
            .collect();
        if open.is_empty() {
            break;
        }
        let mut slot = vec![usize::MAX; arena.len()];
        for (s, &k) in open.iter().enumerate() {
            slot[k] = s;
        }
        // per-node feature subsets (drawn in node order for determinism)
        let allowed: Option<Vec<Vec<bool>>> = params.mtry.filter(|&m| m < p).map(|m| {
            open.iter()
                .map(|_| {
                    let mut mask = vec![false; p];
                    for j in sample(rng, p, m) {
                        mask[j] = true;
                    }
                    mask
                })
                .collect()
        });

        let per_feature: Vec<Vec<Option<Candidate>>> = (0..p)
            .into_par_iter()
            .map(|f| {
                let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
                let mut left = vec![Stats::default(); open.len()];
                let mut last = vec![f64::NAN; open.len()];
                let active = |s: usize| allowed.as_ref().is_none_or(|a| a[s][f]);
                for &r in &sorted[f] {
                    let r = r as usize;
                    let k = node_of[r];
                    if k == NONE {
                        continue;
                    }
                    let s = slot[k as usize];
                    if s == usize::MAX || !active(s) {
                        continue;
                    }
                    let v = x[[r, f]];
                    let l = left[s];
                    if l.w > 0.0 && v > last[s] {
                        let parent = arena[open[s]].stats;
                        let right = Stats {
                            g: parent.g - l.g,
                            h: parent.h - l.h,
                            w: parent.w - l.w,
                        };
                        if l.w >= params.min_leaf && right.w >= params.min_leaf {
                            let gain = 0.5 * (score(&l) + score(&right) - score(&parent));
                            if best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold: 0.5 * (last[s] + v),
                                });
                            }
                        }
                    }
                    left[s].add(g[r] * w[r], h[r] * w[r], w[r]);
                    last[s] = v;
                }
                best
            })
            .collect();

        let mut chosen: Vec<Option<Candidate>> = vec![None; open.len()];
        for cands in &per_feature {
            for (s, c) in cands.iter().enumerate() {
                if let Some(c) = c {
                    if c.gain > 1e-12 * (1.0 + arena[open[s]].stats.g.abs()) && chosen[s].is_none_or(|b| c.gain > b.gain) {
                        chosen[s] = Some(*c);
                    }
                }
            }
        }
        if chosen.iter().all(Option::is_none) {
            break;
        }
        let mut next = Vec::new();
        for (s, c) in chosen.iter().enumerate() {
            if let Some(c) = c {
                let k = open[s];
                let l = arena.len();
                arena.push(ArenaNode {
                    stats: Stats::default(),
                    split: None,
                });
                arena.push(ArenaNode {
                    stats: Stats::default(),
                    split: None,
                });
                arena[k].split = Some((c.feature, c.threshold, l, l + 1));
                gains[c.feature] += c.gain;
                next.push(l);
                next.push(l + 1);
            }
        }
        for i in 0..n {
            let k = node_of[i];
            if k == NONE {
                continue;
            }
            if let Some((f, t, l, r)) = arena[k as usize].split {
                let child = if x[[i, f]] <= t { l } else { r };
                node_of[i] = child as u32;
                arena[child].stats.add(g[i] * w[i], h[i] * w[i], w[i]);
            }
        }
        frontier = next;
    }

    let leaf_value = |s: &Stats| if s.w > 0.0 { -s.g / (s.h + lambda) } else { 0.0 };
    let row_values = node_of
        .iter()
        .map(|&k| {
            if k == NONE {
                f64::NAN
            } else {
                leaf_value(&arena[k as usize].stats)
            }
        })
        .collect();
    fn build(arena: &[ArenaNode], k: usize, leaf: &dyn Fn(&Stats) -> f64) -> Node {
        match arena[k].split {
            None => Node::Leaf {
                value: leaf(&arena[k].stats),
            },
            Some((feature, threshold, l, r)) => Node::Split {
                feature,
                threshold,
                left: Box::new(build(arena, l, leaf)),
                right: Box::new(build(arena, r, leaf)),
            },
        }
    }
    Grown {
        tree: Tree {
            root: build(&arena, 0, &leaf_value),
        },
        gains,
        row_values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stump_finds_step() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let x = Array2::from_shape_vec((10, 1), xs.clone()).unwrap();
        let y: Vec<f64> = xs.iter().map(|&v| if v < 5.0 { 0.0 } else { 10.0 }).collect();
        let g: Vec<f64> = y.iter().map(|v| -v).collect();
        let h = vec![1.0; 10];
        let w = vec![1.0; 10];
        let params = GrowParams {
            max_depth: 1,
            min_leaf: 1.0,
            lambda: 0.0,
            mtry: None,
        };
        let grown = grow(&x, &presort(&x), &g, &h, &w, params, &mut ChaCha8Rng::seed_from_u64(0));
        match &grown.tree.root {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 4.5),
            _ => panic!("expected a split"),
        }
        assert_eq!(grown.row_values[0], 0.0);
        assert_eq!(grown.row_values[9], 10.0);
        // SSE reduction is 250; gain is half of it
        assert!((grown.gains[0] - 125.0).abs() < 1e-9);
    }

    #[test]
    fn min_leaf_blocks_splits() {
        let x = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let g = vec![-1.0, -1.0, -5.0, -5.0];
        let params = GrowParams {
            max_depth: 3,
            min_leaf: 3.0,
            lambda: 0.0,
            mtry: None,
        };
        let grown = grow(&x, &presort(&x), &g, &[1.0; 4], &[1.0; 4], params, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(grown.tree.n_leaves(), 1);
        assert_eq!(grown.row_values[0], 3.0);
    }
}
