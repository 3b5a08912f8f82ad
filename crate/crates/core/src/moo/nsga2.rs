use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{crowded_cmp, crowding_distance, fast_nondominated_sort, Individual};
use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsgaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// Per-gene mutation probability.
    pub mutation_prob: f64,
    #[serde(default = "default_eta_c")]
    pub eta_c: f64,
    #[serde(default = "default_eta_m")]
    pub eta_m: f64,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

fn default_eta_c() -> f64 {
    15.0
}

fn default_eta_m() -> f64 {
    20.0
}

impl NsgaConfig {
    pub fn new(population: usize, generations: usize, crossover_prob: f64, mutation_prob: f64, bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        Self {
            population,
            generations,
            crossover_prob,
            mutation_prob,
            eta_c: default_eta_c(),
            eta_m: default_eta_m(),
            bounds,
            seed,
        }
    }

    /// Settings used for the smaller motor portfolio (N=50, G=25).
    pub fn pg15(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        Self::new(50, 25, 0.9, 0.1, bounds, seed)
    }

    /// Settings used for the larger motor portfolio (N=120, G=50).
    pub fn fremotor(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        Self::new(120, 50, 0.9, 0.2, bounds, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || !self.population.is_multiple_of(2) {
            return domain(format!("population {} must be even and at least 2", self.population));
        }
        for (name, p) in [("crossover", self.crossover_prob), ("mutation", self.mutation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return domain(format!("{name} probability {p} outside [0, 1]"));
            }
        }
        if !(self.eta_c >= 0.0 && self.eta_m >= 0.0) {
            return domain("distribution indices must be non-negative");
        }
        if self.bounds.is_empty() {
            return domain("genome needs at least one gene");
        }
        if let Some((lo, hi)) = self.bounds.iter().find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return domain(format!("invalid gene bounds [{lo}, {hi}]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsgaResult {
    pub population: Vec<Individual>,
    /// Rank-1 members of the final population.
    pub archive: Vec<Individual>,
    pub evaluations: usize,
}

/// Crowded binary tournament between two distinct uniformly drawn members;
/// a full tie goes to the first draw.
pub fn tournament_select<R: Rng>(population: &[Individual], rng: &mut R) -> usize {
    let n = population.len();
    let i = rng.random_range(0..n);
    if n == 1 {
        return i;
    }
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    if crowded_cmp(&population[j], &population[i]).is_lt() {
        j
    } else {
        i
    }
}

/// Unclipped SBX children of one gene pair for a uniform draw `u` in [0, 1).
pub fn sbx_children(x1: f64, x2: f64, eta: f64, u: f64) -> (f64, f64) {
    let beta = if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    };
    (
        0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2),
        0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2),
    )
}

/// Simulated binary crossover with probability `p_c`. Each gene is then
/// recombined with probability 1/2 and its two children swapped with
/// probability 1/2; results are clipped to `bounds`.
pub fn sbx_crossover<R: Rng>(
    p1: &[f64],
    p2: &[f64],
    p_c: f64,
    eta: f64,
    bounds: &[(f64, f64)],
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    if rng.random::<f64>() < p_c {
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if rng.random::<f64>() >= 0.5 {
                continue;
            }
            let (mut a, mut b) = sbx_children(p1[k], p2[k], eta, rng.random());
            if rng.random::<bool>() {
                std::mem::swap(&mut a, &mut b);
            }
            c1[k] = a.clamp(lo, hi);
            c2[k] = b.clamp(lo, hi);
        }
    }
    (c1, c2)
}

/// Polynomial mutation of each gene with probability `p_m`, clipped to bounds.
pub fn polynomial_mutation<R: Rng>(genome: &mut [f64], p_m: f64, eta: f64, bounds: &[(f64, f64)], rng: &mut R) {
    for (x, &(lo, hi)) in genome.iter_mut().zip(bounds) {
        if rng.random::<f64>() >= p_m {
            continue;
        }
        let u: f64 = rng.random();
        let delta = if u < 0.5 {
            (2.0 * u).powf(1.0 / (eta + 1.0)) - 1.0
        } else {
            1.0 - (2.0 * (1.0 - u)).powf(1.0 / (eta + 1.0))
        };
        *x = (*x + delta * (hi - lo)).clamp(lo, hi);
    }
}

pub fn nsga2_evolve<F>(evaluate: F, config: &NsgaConfig) -> Result<NsgaResult>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    nsga2_evolve_with(evaluate, config, &[], |_, _| {})
}

/// Full run. `seeds` replace the first members of the random initial
/// population (clipped to bounds); `observer` sees every generation's
/// population after truncation, starting with generation 0.
pub fn nsga2_evolve_with<F, O>(evaluate: F, config: &NsgaConfig, seeds: &[Vec<f64>], mut observer: O) -> Result<NsgaResult>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
    O: FnMut(usize, &[Individual]),
{
    config.validate()?;
    let n = config.population;
    let bounds = &config.bounds;
    if seeds.len() > n {
        return domain(format!("{} seed genomes exceed the population of {n}", seeds.len()));
    }
    if let Some(s) = seeds.iter().find(|s| s.len() != bounds.len()) {
        return domain(format!("seed genome has {} genes, expected {}", s.len(), bounds.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut genomes: Vec<Vec<f64>> = seeds
        .iter()
        .map(|s| s.iter().zip(bounds).map(|(x, (lo, hi))| x.clamp(*lo, *hi)).collect())
        .collect();
    while genomes.len() < n {
        genomes.push(bounds.iter().map(|&(lo, hi)| if lo < hi { rng.random_range(lo..hi) } else { lo }).collect());
    }
    let mut width = None;
    let mut evaluations = 0;
    let mut population = evaluate_all(&evaluate, genomes, &mut width);
    evaluations += n;
    assign_rank_and_crowding(&mut population);
    observer(0, &population);
    for generation in 1..=config.generations {
        let mut children = Vec::with_capacity(n);
        while children.len() < n {
            let a = tournament_select(&population, &mut rng);
            let b = tournament_select(&population, &mut rng);
            let (mut c1, mut c2) = sbx_crossover(
                &population[a].genome,
                &population[b].genome,
                config.crossover_prob,
                config.eta_c,
                bounds,
                &mut rng,
            );
            polynomial_mutation(&mut c1, config.mutation_prob, config.eta_m, bounds, &mut rng);
            polynomial_mutation(&mut c2, config.mutation_prob, config.eta_m, bounds, &mut rng);
            children.push(c1);
            children.push(c2);
        }
        let offspring = evaluate_all(&evaluate, children, &mut width);
        evaluations += n;
        population.extend(offspring);
        population = truncate(population, n);
        observer(generation, &population);
    }
    let archive = population.iter().filter(|i| i.rank == 1).cloned().collect();
    Ok(NsgaResult {
        population,
        archive,
        evaluations,
    })
}

fn evaluate_all<F>(evaluate: &F, genomes: Vec<Vec<f64>>, width: &mut Option<usize>) -> Vec<Individual>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let raw: Vec<Vec<f64>> = genomes.par_iter().map(|g| evaluate(g)).collect();
    let m = *width.get_or_insert_with(|| raw.iter().map(|r| r.len()).max().unwrap_or(1).max(1));
    genomes
        .into_iter()
        .zip(raw)
        .map(|(genome, objectives)| {
            let ok = objectives.len() == m && objectives.iter().all(|v| v.is_finite());
            if !ok {
                log::warn!("non-finite objectives; individual set to +inf");
            }
            Individual {
                genome,
                objectives: if ok { objectives } else { vec![f64::INFINITY; m] },
                rank: 0,
                crowding: 0.0,
            }
        })
        .collect()
}

fn assign_rank_and_crowding(population: &mut [Individual]) {
    let objs: Vec<Vec<f64>> = population.iter().map(|i| i.objectives.clone()).collect();
    for (r, front) in fast_nondominated_sort(&objs).into_iter().enumerate() {
        let cd = crowding_distance(&objs, &front);
        for (k, &i) in front.iter().enumerate() {
            population[i].rank = r + 1;
            population[i].crowding = cd[k];
        }
    }
}

/// Elitist reduction of parents plus offspring to `n` members.
fn truncate(mut merged: Vec<Individual>, n: usize) -> Vec<Individual> {
    assign_rank_and_crowding(&mut merged);
    let mut order: Vec<usize> = (0..merged.len()).collect();
    order.sort_by(|&a, &b| crowded_cmp(&merged[a], &merged[b]).then(a.cmp(&b)));
    order.truncate(n);
    order.sort_unstable();
    let mut keep = vec![false; merged.len()];
    for &i in &order {
        keep[i] = true;
    }
    let mut next: Vec<Individual> = merged.into_iter().zip(keep).filter(|(_, k)| *k).map(|(i, _)| i).collect();
    assign_rank_and_crowding(&mut next);
    next
}
