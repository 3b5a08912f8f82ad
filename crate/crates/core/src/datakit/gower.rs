//! Gower dissimilarity over the non-protected rating factors.

use rayon::prelude::*;

use super::dataset::{Column, Dataset};
use crate::error::{domain, Result};

/// One cell of a record, as seen by [`gower_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureValue<'a> {
    Num(f64),
    Cat(&'a str),
}

/// Mean per-feature dissimilarity: `|x - y| / range` for numeric features
/// (capped at 1, zero when the range is degenerate) and a 0/1 mismatch for
/// categorical ones.
///
/// `ranges[k]` is the `(min, max)` of feature `k` when it is numeric.
pub fn gower_distance(x: &[FeatureValue<'_>], y: &[FeatureValue<'_>], ranges: &[Option<(f64, f64)>]) -> f64 {
    assert_eq!(x.len(), y.len(), "records must share a feature set");
    assert_eq!(x.len(), ranges.len(), "one range slot per feature");
    if x.is_empty() {
        return 0.0;
    }
    let total: f64 = x
        .iter()
        .zip(y)
        .zip(ranges)
        .map(|((a, b), r)| match (a, b) {
            (FeatureValue::Num(a), FeatureValue::Num(b)) => match r {
                Some((lo, hi)) if hi > lo => ((a - b).abs() / (hi - lo)).min(1.0),
                _ => 0.0,
            },
            (FeatureValue::Cat(a), FeatureValue::Cat(b)) => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
            _ => panic!("feature kinds differ between records"),
        })
        .sum();
    total / x.len() as f64
}

/// Pre-scaled view of a dataset's non-protected features for repeated
/// distance queries.
#[derive(Debug, Clone)]
pub struct GowerSpace {
    n: usize,
    n_features: usize,
    // row-major, numeric features divided by their range (None when degenerate)
    numeric: Vec<f64>,
    numeric_width: usize,
    categorical: Vec<u32>,
    categorical_width: usize,
}

impl GowerSpace {
    pub fn new(data: &Dataset) -> Self {
        let schema = data.schema();
        let ranges = data.numeric_ranges();
        let mut num_cols: Vec<Vec<f64>> = Vec::new();
        let mut cat_cols: Vec<&[u32]> = Vec::new();
        let features = schema.feature_indices();
        for &j in &features {
            match &data.columns()[j] {
                Column::Numeric(v) => {
                    if let Some((lo, hi)) = ranges[j] {
                        if hi > lo {
                            num_cols.push(v.iter().map(|x| x / (hi - lo)).collect());
                        }
                    }
                }
                Column::Categorical { codes, .. } => cat_cols.push(codes),
                Column::Absent => {}
            }
        }
        let n = data.n_rows();
        let numeric_width = num_cols.len();
        let categorical_width = cat_cols.len();
        let mut numeric = Vec::with_capacity(n * numeric_width);
        let mut categorical = Vec::with_capacity(n * categorical_width);
        for i in 0..n {
            numeric.extend(num_cols.iter().map(|c| c[i]));
            categorical.extend(cat_cols.iter().map(|c| c[i]));
        }
        Self {
            n,
            n_features: features.len(),
            numeric,
            numeric_width,
            categorical,
            categorical_width,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if self.n_features == 0 {
            return 0.0;
        }
        let (nw, cw) = (self.numeric_width, self.categorical_width);
        let xi = &self.numeric[i * nw..(i + 1) * nw];
        let xj = &self.numeric[j * nw..(j + 1) * nw];
        let mut total: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b).abs().min(1.0)).sum();
        let ci = &self.categorical[i * cw..(i + 1) * cw];
        let cj = &self.categorical[j * cw..(j + 1) * cw];
        total += ci.iter().zip(cj).filter(|(a, b)| a != b).count() as f64;
        total / self.n_features as f64
    }

    /// Nearest other row among `candidates`; ties go to the smallest index.
    pub fn nearest_among(&self, i: usize, candidates: &[usize]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for &j in candidates {
            if j == i {
                continue;
            }
            let d = self.distance(i, j);
            best = match best {
                Some((bj, bd)) if bd < d || (bd == d && bj < j) => Some((bj, bd)),
                _ => Some((j, d)),
            };
        }
        best
    }

    /// The `k` nearest rows to `i` among `candidates` (excluding `i`), sorted
    /// by distance then index.
    pub fn k_nearest_among(&self, i: usize, candidates: &[usize], k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = candidates
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| (j, self.distance(i, j)))
            .collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
        if k < all.len() {
            all.select_nth_unstable_by(k, cmp);
            all.truncate(k);
        }
        all.sort_by(cmp);
        all
    }

    /// Exact nearest neighbour of every row in `rows`, searched within `rows`.
    pub fn nearest_neighbors(&self, rows: &[usize]) -> Result<Vec<(usize, f64)>> {
        if rows.len() < 2 {
            return domain("nearest neighbour search needs at least 2 rows");
        }
        Ok(rows
            .par_iter()
            .map(|&i| self.nearest_among(i, rows).expect("at least one other row"))
            .collect())
    }
}

/// Nearest other row to `i` over non-protected features.
pub fn nearest_neighbor(data: &Dataset, i: usize) -> Result<(usize, f64)> {
    let n = data.n_rows();
    if n < 2 {
        return domain("nearest neighbour search needs at least 2 rows");
    }
    if i >= n {
        return domain(format!("row {i} out of range"));
    }
    let space = GowerSpace::new(data);
    let all: Vec<usize> = (0..n).collect();
    Ok(space.nearest_among(i, &all).expect("n >= 2"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::dataset::RawColumn;
    use crate::datakit::schema::{ColumnSpec, Schema};
    use proptest::prelude::*;

    #[test]
    fn half_numeric_difference() {
        let r = [Some((0.0, 10.0)), None];
        let x = [FeatureValue::Num(2.0), FeatureValue::Cat("A")];
        let y = [FeatureValue::Num(7.0), FeatureValue::Cat("A")];
        assert!((gower_distance(&x, &y, &r) - 0.25).abs() < 1e-15);
        assert_eq!(gower_distance(&x, &x, &r), 0.0);
        let x = [FeatureValue::Num(0.0), FeatureValue::Cat("A")];
        let y = [FeatureValue::Num(10.0), FeatureValue::Cat("B")];
        assert_eq!(gower_distance(&x, &y, &r), 1.0);
    }

    #[test]
    fn degenerate_range_contributes_zero() {
        let r = [Some((3.0, 3.0))];
        let d = gower_distance(&[FeatureValue::Num(3.0)], &[FeatureValue::Num(5.0)], &r);
        assert_eq!(d, 0.0);
    }

    fn one_d(values: &[f64]) -> Dataset {
        let schema = Schema {
            columns: vec![
                ColumnSpec::numeric("x"),
                ColumnSpec::categorical("g"),
                ColumnSpec::numeric("y"),
            ],
            sensitive: "g".into(),
            group_a: None,
            target: "y".into(),
            count_target: None,
            exposure: None,
            permitted: None,
        };
        let n = values.len();
        Dataset::from_columns(
            schema,
            vec![
                RawColumn::Numeric(values.to_vec()),
                RawColumn::Categorical((0..n).map(|i| if i % 2 == 0 { "a" } else { "b" }.to_string()).collect()),
                RawColumn::Numeric(vec![1.0; n]),
            ],
            0,
        )
        .unwrap()
    }

    #[test]
    fn nearest_neighbor_examples() {
        let d = one_d(&[0.0, 1.0, 10.0]);
        assert_eq!(nearest_neighbor(&d, 0).unwrap().0, 1);
        let d = one_d(&[4.0, 4.0, 9.0]);
        assert_eq!(nearest_neighbor(&d, 0).unwrap(), (1, 0.0));
        // row 1 is equidistant from rows 0 and 2
        let d = one_d(&[0.0, 5.0, 10.0]);
        assert_eq!(nearest_neighbor(&d, 1).unwrap().0, 0);
    }

    #[test]
    fn nearest_neighbor_needs_two_rows() {
        let d = one_d(&[0.0, 1.0]);
        assert!(nearest_neighbor(&d, 5).is_err());
    }

    fn record() -> impl Strategy<Value = (f64, u8, f64)> {
        (0.0..100.0f64, 0u8..3, -5.0..5.0f64)
    }

    proptest! {
        #[test]
        fn gower_is_symmetric_bounded_and_reflexive(a in record(), b in record()) {
            let cats = ["p", "q", "r"];
            let ranges = [Some((0.0, 100.0)), None, Some((-5.0, 5.0))];
            let x = [FeatureValue::Num(a.0), FeatureValue::Cat(cats[a.1 as usize]), FeatureValue::Num(a.2)];
            let y = [FeatureValue::Num(b.0), FeatureValue::Cat(cats[b.1 as usize]), FeatureValue::Num(b.2)];
            let dxy = gower_distance(&x, &y, &ranges);
            prop_assert!((0.0..=1.0).contains(&dxy));
            prop_assert_eq!(dxy, gower_distance(&y, &x, &ranges));
            prop_assert_eq!(gower_distance(&x, &x, &ranges), 0.0);
        }
    }
}
