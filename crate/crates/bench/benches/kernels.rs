use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fairprice_core::datakit::{synth_generate, Encoder, GeneratorSpec, GowerSpace};
use fairprice_core::moo::{fast_nondominated_sort, hypervolume};
use fairprice_core::predictors::{gbt_fit, GbtLoss, GbtParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn random_objectives(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect()
}

fn gower_nearest(c: &mut Criterion) {
    let mut group = c.benchmark_group("gower_nearest_neighbors");
    for n in [500, 2000] {
        let data = synth_generate(&GeneratorSpec::confounded(n, 0.3), 1).unwrap();
        let space = GowerSpace::new(&data);
        let rows: Vec<usize> = (0..n).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &rows, |b, rows| {
            b.iter(|| space.nearest_neighbors(black_box(rows)).unwrap())
        });
    }
    group.finish();
}

fn nondominated_sort(c: &mut Criterion) {
    let mut group = c.benchmark_group("fast_nondominated_sort");
    for (n, m) in [(100, 2), (200, 4), (1000, 4)] {
        let objs = random_objectives(n, m, 2);
        group.bench_with_input(BenchmarkId::new(format!("m{m}"), n), &objs, |b, o| {
            b.iter(|| fast_nondominated_sort(black_box(o)))
        });
    }
    group.finish();
}

fn gbt(c: &mut Criterion) {
    let data = synth_generate(&GeneratorSpec::confounded(5000, 0.3), 3).unwrap();
    let mm = Encoder::fit(&data, true).unwrap().transform(&data).unwrap();
    let y = data.target().to_vec();
    let params = GbtParams {
        n_trees: 50,
        ..Default::default()
    };
    let mut group = c.benchmark_group("gbt_fit");
    group.sample_size(10);
    group.bench_function("gamma_5000x50", |b| b.iter(|| gbt_fit(&mm, black_box(&y), GbtLoss::GammaDeviance, &params).unwrap()));
    group.finish();
}

fn hv(c: &mut Criterion) {
    let mut group = c.benchmark_group("hypervolume");
    for (n, m) in [(50, 2), (50, 3), (50, 4)] {
        // points on the unit simplex surface are mutually nondominated
        let pts: Vec<Vec<f64>> = random_objectives(n, m, 4)
            .into_iter()
            .map(|p| {
                let s: f64 = p.iter().sum();
                p.iter().map(|v| v / s).collect()
            })
            .collect();
        let reference = vec![1.1; m];
        group.bench_with_input(BenchmarkId::new(format!("m{m}"), n), &pts, |b, p| {
            b.iter(|| hypervolume(black_box(p), &reference))
        });
    }
    group.finish();
}

criterion_group!(benches, gower_nearest, nondominated_sort, gbt, hv);
criterion_main!(benches);
