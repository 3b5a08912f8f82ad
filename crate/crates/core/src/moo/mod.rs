//! Multi-objective search: Pareto sorting, NSGA-II, hypervolume and TOPSIS.
//! Every objective is minimized.

mod hypervolume;
mod nsga2;
mod topsis;
mod zdt;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use hypervolume::hypervolume;
pub use nsga2::{
    nsga2_evolve, nsga2_evolve_with, polynomial_mutation, sbx_children, sbx_crossover, tournament_select,
    NsgaConfig, NsgaResult,
};
pub use topsis::{topsis_select, Criterion, TopsisConfig, TopsisResult};
pub use zdt::zdt1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub objectives: Vec<f64>,
    /// Front index, starting at 1.
    pub rank: usize,
    pub crowding: f64,
}

/// `u` is no worse than `v` everywhere and strictly better somewhere.
pub fn dominates(u: &[f64], v: &[f64]) -> bool {
    let mut strict = false;
    for (a, b) in u.iter().zip(v) {
        if a > b {
            return false;
        }
        if a < b {
            strict = true;
        }
    }
    strict
}

/// Fronts of row indices, best first; each front is in ascending index order.
pub fn fast_nondominated_sort(objectives: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for p in 0..n {
        for q in (p + 1)..n {
            if dominates(&objectives[p], &objectives[q]) {
                dominated_by[p].push(q);
                count[q] += 1;
            } else if dominates(&objectives[q], &objectives[p]) {
                dominated_by[q].push(p);
                count[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by[p] {
                count[q] -= 1;
                if count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (indices into `objectives`).
pub fn crowding_distance(objectives: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let k = front.len();
    if k <= 2 {
        return vec![f64::INFINITY; k];
    }
    let m = objectives[front[0]].len();
    let mut dist = vec![0.0; k];
    let mut order: Vec<usize> = (0..k).collect();
    for j in 0..m {
        let val = |p: usize| objectives[front[p]][j];
        order.sort_by(|&a, &b| val(a).total_cmp(&val(b)).then(a.cmp(&b)));
        let (lo, hi) = (val(order[0]), val(order[k - 1]));
        dist[order[0]] = f64::INFINITY;
        dist[order[k - 1]] = f64::INFINITY;
        let range = hi - lo;
        if !(range.is_finite() && range > 0.0) {
            continue;
        }
        for w in 1..k - 1 {
            let gap = (val(order[w + 1]) - val(order[w - 1])) / range;
            if gap.is_finite() {
                dist[order[w]] += gap;
            }
        }
    }
    dist
}

/// Crowded comparison: lower rank first, then larger crowding.
pub(crate) fn crowded_cmp(a: &Individual, b: &Individual) -> Ordering {
    a.rank.cmp(&b.rank).then(b.crowding.total_cmp(&a.crowding))
}

/// Rows of `objectives` not dominated by any other row.
pub fn nondominated_indices(objectives: &[Vec<f64>]) -> Vec<usize> {
    (0..objectives.len())
        .filter(|&i| !objectives.iter().any(|o| dominates(o, &objectives[i])))
        .collect()
}

/// Writes one row per solution and one column per objective.
pub fn write_parallel_coordinates<W: std::io::Write>(
    writer: W,
    names: &[&str],
    individuals: &[Individual],
) -> crate::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["solution".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (i, ind) in individuals.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(ind.objectives.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| crate::Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[1.0, 1.0], &[2.0, 2.0]));
        assert!(!dominates(&[1.0, 2.0], &[2.0, 1.0]));
        assert!(!dominates(&[2.0, 1.0], &[1.0, 2.0]));
        assert!(!dominates(&[1.0, 1.0], &[1.0, 1.0]));
        assert!(dominates(&[1.0, 1.0], &[1.0, f64::INFINITY]));
    }

    #[test]
    fn sort_small_example() {
        let o = vec![vec![1.0, 1.0], vec![1.0, 2.0], vec![2.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(fast_nondominated_sort(&o), vec![vec![0], vec![1, 2], vec![3]]);
        let same = vec![vec![3.0, 3.0]; 5];
        assert_eq!(fast_nondominated_sort(&same), vec![vec![0, 1, 2, 3, 4]]);
        assert!(fast_nondominated_sort(&[]).is_empty());
    }

    #[test]
    fn crowding_examples() {
        let o = vec![vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0]];
        let d = crowding_distance(&o, &[0, 1, 2]);
        assert_eq!(d, vec![f64::INFINITY, 2.0, f64::INFINITY]);
        assert_eq!(crowding_distance(&o, &[0, 2]), vec![f64::INFINITY; 2]);
        let dup = vec![vec![0.0, 4.0], vec![2.0, 2.0], vec![2.0, 2.0], vec![2.0, 2.0], vec![4.0, 0.0]];
        assert_eq!(crowding_distance(&dup, &[0, 1, 2, 3, 4])[2], 0.0);
        let same = vec![vec![1.0, 1.0]; 4];
        assert_eq!(crowding_distance(&same, &[0, 1, 2, 3])[1..3], [0.0, 0.0]);
        let flat = vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]];
        assert_eq!(crowding_distance(&flat, &[0, 1, 2])[1], 1.0);
    }

    fn peel(o: &[Vec<f64>]) -> Vec<Vec<usize>> {
        let mut left: Vec<usize> = (0..o.len()).collect();
        let mut fronts = Vec::new();
        while !left.is_empty() {
            let f: Vec<usize> = left
                .iter()
                .copied()
                .filter(|&i| !left.iter().any(|&j| dominates(&o[j], &o[i])))
                .collect();
            left.retain(|i| !f.contains(i));
            fronts.push(f);
        }
        fronts
    }

    proptest! {
        #[test]
        fn sort_matches_peeling(m in 2usize..=4, pts in prop::collection::vec(prop::collection::vec(0u8..6, 4), 0..60)) {
            let o: Vec<Vec<f64>> = pts.iter().map(|p| p[..m].iter().map(|&v| v as f64).collect()).collect();
            prop_assert_eq!(fast_nondominated_sort(&o), peel(&o));
        }

        #[test]
        fn rank_one_is_nondominated(pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..50)) {
            let fronts = fast_nondominated_sort(&pts);
            prop_assert_eq!(&fronts[0], &nondominated_indices(&pts));
            prop_assert_eq!(fronts.iter().map(|f| f.len()).sum::<usize>(), pts.len());
        }
    }
}
