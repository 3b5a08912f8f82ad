use fairprice_core::moo::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Euclidean distance from `(f1, f2)` to the curve `f2 = 1 - sqrt(f1)`, by a
/// dense scan followed by ternary refinement.
fn distance_to_front(f1: f64, f2: f64) -> f64 {
    let d = |t: f64| ((f1 - t).powi(2) + (f2 - 1.0 + t.sqrt()).powi(2)).sqrt();
    let steps = 20_000;
    let k = (0..=steps).min_by(|&a, &b| d(a as f64 / steps as f64).total_cmp(&d(b as f64 / steps as f64))).unwrap();
    let (mut lo, mut hi) = (((k as f64 - 1.0) / steps as f64).max(0.0), ((k as f64 + 1.0) / steps as f64).min(1.0));
    for _ in 0..100 {
        let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if d(m1) < d(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    d(0.5 * (lo + hi)).min(d(k as f64 / steps as f64))
}

#[test]
fn front_distance_oracle() {
    assert!(distance_to_front(0.25, 0.5) < 1e-9);
    assert!((distance_to_front(0.0, 1.5) - 0.5).abs() < 1e-9);
}

#[test]
fn zdt1_converges() {
    for seed in 1..=3 {
        let start = Instant::now();
        let config = NsgaConfig::new(50, 100, 0.9, 1.0 / 30.0, vec![(0.0, 1.0); 30], seed);
        let res = nsga2_evolve(zdt1, &config).unwrap();
        assert!(start.elapsed().as_secs() < 60);
        let mean = res.archive.iter().map(|i| distance_to_front(i.objectives[0], i.objectives[1])).sum::<f64>()
            / res.archive.len() as f64;
        assert!(mean < 0.1, "seed {seed}: mean distance {mean}");
        for a in &res.archive {
            assert!(res.archive.iter().all(|b| !dominates(&b.objectives, &a.objectives)));
        }
    }
}

#[test]
fn rank_one_hypervolume_never_shrinks() {
    let config = NsgaConfig::new(50, 60, 0.9, 1.0 / 30.0, vec![(0.0, 1.0); 30], 7);
    let mut volumes = Vec::new();
    nsga2_evolve_with(zdt1, &config, &[], |_, pop| {
        let pts: Vec<Vec<f64>> = pop.iter().filter(|i| i.rank == 1).map(|i| i.objectives.clone()).collect();
        volumes.push(hypervolume(&pts, &[11.0, 11.0]));
    })
    .unwrap();
    for (g, w) in volumes.windows(2).enumerate() {
        assert!(w[1] >= w[0] - 1e-12, "generation {}: {} -> {}", g + 1, w[0], w[1]);
    }
}

#[test]
fn runs_repeat_under_seed() {
    let config = NsgaConfig::new(20, 10, 0.9, 0.1, vec![(0.0, 1.0); 5], 11);
    assert_eq!(nsga2_evolve(zdt1, &config).unwrap(), nsga2_evolve(zdt1, &config).unwrap());
}

fn peel(o: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..o.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let f: Vec<usize> = left.iter().copied().filter(|&i| !left.iter().any(|&j| dominates(&o[j], &o[i]))).collect();
        left.retain(|i| !f.contains(i));
        fronts.push(f);
    }
    fronts
}

#[test]
fn sorting_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.random_range(1..=200);
        let m = rng.random_range(2..=4);
        let levels = rng.random_range(3..50);
        let o: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(0..levels) as f64).collect()).collect();
        assert_eq!(fast_nondominated_sort(&o), peel(&o));
    }
}

#[test]
fn duplicated_alternative_keeps_winner_closeness() {
    let rows = vec![vec![1.0, 3.0, 2.0, 0.5], vec![2.0, 1.0, 2.5, 0.2], vec![3.0, 2.0, 1.0, 0.9]];
    let cfg = TopsisConfig::default();
    let base = topsis_select(&rows, &cfg).unwrap();
    let mut more = rows.clone();
    more.push(rows[base.best].clone());
    let again = topsis_select(&more, &cfg).unwrap();
    assert_eq!(again.closeness[base.best], again.closeness[3]);
}
