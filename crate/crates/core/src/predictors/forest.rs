use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, presort, GrowParams, Tree};
use crate::datakit::ModelMatrix;
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per node; defaults to `max(1, p / 3)`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            min_leaf: 5,
            max_depth: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Normalized total variance reduction per design column.
    pub importances: Vec<f64>,
    pub column_names: Vec<String>,
}

impl ForestModel {
    pub fn predict(&self, mm: &ModelMatrix) -> Result<Vec<f64>> {
        if mm.ncols() != self.importances.len() {
            return Err(Error::Dimension {
                expected: self.importances.len(),
                found: mm.ncols(),
            });
        }
        let k = self.trees.len() as f64;
        Ok(mm
            .design
            .rows()
            .into_iter()
            .map(|r| self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / k)
            .collect())
    }
}

/// Bagged CART regression forest with impurity importances.
pub fn forest_fit(mm: &ModelMatrix, y: &[f64], params: &ForestParams) -> Result<ForestModel> {
    let n = mm.nrows();
    let p = mm.ncols();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, found: y.len() });
    }
    if params.n_trees == 0 {
        return domain("forest needs at least one tree");
    }
    if params.min_leaf == 0 {
        return domain("min_leaf must be at least 1");
    }
    if n < 2 * params.min_leaf {
        return domain(format!("{n} rows is fewer than 2 * min_leaf = {}", 2 * params.min_leaf));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return domain("forest target must be finite");
    }
    let mtry = params.mtry.unwrap_or((p / 3).max(1));
    if mtry == 0 || mtry > p {
        return domain(format!("mtry {mtry} outside 1..={p}"));
    }
    let x = &mm.design;
    let sorted = presort(x);
    let g: Vec<f64> = y.iter().map(|v| -v).collect();
    let h = vec![1.0; n];
    let grow_params = GrowParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf as f64,
        lambda: 0.0,
        mtry: Some(mtry),
    };
    let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let mut w = vec![0.0; n];
            for _ in 0..n {
                w[rng.random_range(0..n)] += 1.0;
            }
            let out = grow(x, &sorted, &g, &h, &w, grow_params, &mut rng);
            (out.tree, out.gains)
        })
        .collect();
    let mut importances = vec![0.0; p];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, gains) in grown {
        for (a, b) in importances.iter_mut().zip(&gains) {
            *a += b;
        }
        trees.push(tree);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    } else {
        importances.iter_mut().for_each(|v| *v = 1.0 / p as f64);
    }
    Ok(ForestModel {
        trees,
        importances,
        column_names: mm.column_names.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize, seed: u64, signal: bool) -> (ModelMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y = rows
            .iter()
            .map(|r| if signal { (6.0 * r[0]).sin() * 3.0 } else { rng.random::<f64>() })
            .collect();
        (ModelMatrix::from_rows(&["a", "b", "c"], &rows).unwrap(), y)
    }

    #[test]
    fn importance_concentrates_on_signal() {
        let (mm, y) = data(600, 3, true);
        let params = ForestParams {
            n_trees: 50,
            seed: 9,
            ..Default::default()
        };
        let f = forest_fit(&mm, &y, &params).unwrap();
        assert!(f.importances[0] > 0.8, "{:?}", f.importances);
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_gives_roughly_uniform_importance() {
        let (mm, y) = data(600, 4, false);
        let params = ForestParams {
            n_trees: 50,
            seed: 1,
            ..Default::default()
        };
        let f = forest_fit(&mm, &y, &params).unwrap();
        for v in &f.importances {
            assert!((v - 1.0 / 3.0).abs() < 0.15, "{:?}", f.importances);
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (mm, y) = data(200, 5, true);
        let params = ForestParams {
            n_trees: 10,
            seed: 2,
            ..Default::default()
        };
        let a = forest_fit(&mm, &y, &params).unwrap();
        let b = forest_fit(&mm, &y, &params).unwrap();
        assert_eq!(a, b);
    }
}
