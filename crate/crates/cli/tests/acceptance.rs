//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the lines are always printed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use fairprice_cli::{cmd_ensemble, RunConfig};
use fairprice_core::causalforest::{causal_forest_fit, causal_forest_fit_matrix, ite_summary, CausalForestParams};
use fairprice_core::datakit::{synth_generate, Dataset, Encoder, GeneratorSpec, ModelMatrix};
use fairprice_core::ensemble::{run_ensemble, EnsembleConfig, EnsembleRun};
use fairprice_core::fairmodels::{
    fit_mb, fit_mbc, fit_mdf, fit_mscm, fit_mu, orthogonalize, scm_weights, tune_lambda, EngineConfig, FairConfig,
    MnnParams,
};
use fairprice_core::metrics::{disparity_impact_ratio, local_lipschitz, normalized_gini};
use fairprice_core::moo::{dominates, fast_nondominated_sort, nsga2_evolve, topsis_select, zdt1, Criterion, NsgaConfig, TopsisConfig};
use fairprice_core::predictors::{glm_fit, Family};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

fn split_by(x: &[f64], mask: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let a = x.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
    let b = x.iter().zip(mask).filter(|(_, m)| !**m).map(|(v, _)| *v).collect();
    (a, b)
}

/// Two-sample Kolmogorov-Smirnov statistic by direct scan of both ECDFs.
fn ks(a: &[f64], b: &[f64]) -> f64 {
    let mut pts: Vec<f64> = a.iter().chain(b).copied().collect();
    pts.sort_by(f64::total_cmp);
    pts.iter()
        .map(|&t| {
            let fa = a.iter().filter(|v| **v <= t).count() as f64 / a.len() as f64;
            let fb = b.iter().filter(|v| **v <= t).count() as f64 / b.len() as f64;
            (fa - fb).abs()
        })
        .fold(0.0, f64::max)
}

/// Distance from `(f1, f2)` to the curve `f2 = 1 - sqrt(f1)` on [0, 1]:
/// dense scan, then ternary search around the best grid point.
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

fn c1_zdt1() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in 1..=3 {
        let start = Instant::now();
        let config = NsgaConfig::new(50, 100, 0.9, 1.0 / 30.0, vec![(0.0, 1.0); 30], seed);
        let res = nsga2_evolve(zdt1, &config).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let dist = mean(&res.archive.iter().map(|i| distance_to_front(i.objectives[0], i.objectives[1])).collect::<Vec<_>>());
        ok &= dist < 0.1 && secs < 60.0;
        parts.push(format!("seed {seed}: distance {dist:.4} in {secs:.1}s"));
    }
    ensure(ok, parts.join("; "))
}

/// Repeatedly removes the set of points no remaining point dominates.
fn peel(o: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let strictly_better = |u: &[f64], v: &[f64]| u.iter().zip(v).all(|(a, b)| a <= b) && u.iter().zip(v).any(|(a, b)| a < b);
    let mut left: Vec<usize> = (0..o.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let f: Vec<usize> = left.iter().copied().filter(|&i| !left.iter().any(|&j| strictly_better(&o[j], &o[i]))).collect();
        left.retain(|i| !f.contains(i));
        fronts.push(f);
    }
    fronts
}

fn c2_sort_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for k in 0..100 {
        let n = rng.random_range(1..=200);
        let m = [2, 3, 4][k % 3];
        // coarse integer grid so ties and duplicates occur
        let levels = rng.random_range(3..40);
        let o: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(0..levels) as f64).collect()).collect();
        let mut got = fast_nondominated_sort(&o);
        for f in &mut got {
            f.sort_unstable();
        }
        if got != peel(&o) {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, format!("{mismatches} mismatches over 100 instances"))
}

fn c3_topsis() -> Outcome {
    let config = TopsisConfig {
        weights: vec![0.7, 0.3],
        criteria: vec![Criterion::Cost, Criterion::Cost],
    };
    let r = topsis_select(&[vec![1.0, 2.0], vec![2.0, 1.0]], &config).map_err(|e| e.to_string())?;
    let (ca, cb) = (r.closeness[0], r.closeness[1]);
    ensure(
        (ca - 0.7).abs() <= 1e-3 && (cb - 0.3).abs() <= 1e-3 && r.best == 0,
        format!("C = ({ca:.6}, {cb:.6}), selected {}", ["A", "B"][r.best]),
    )
}

fn c4_by_construction() -> Outcome {
    let glm = EngineConfig::glm();
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, data) in [
        ("confounded", synth_generate(&GeneratorSpec::confounded(2000, 0.3), 41).unwrap()),
        ("balanced", synth_generate(&GeneratorSpec::balanced(2000, 5.0), 42).unwrap()),
    ] {
        let flipped = data.with_flipped_sensitive().unwrap();
        let mu = fit_mu(&glm, &data).unwrap();
        let mdf = fit_mdf(fit_mb(&glm, &data).unwrap(), &data).unwrap();
        let (mscm, _) = fit_mscm(&FairConfig::default(), &data).unwrap();
        let inv = mu.predict(&data).unwrap() == mu.predict(&flipped).unwrap()
            && mdf.predict(&data).unwrap() == mdf.predict(&flipped).unwrap()
            && mscm.predict(&data).unwrap() == mscm.predict(&flipped).unwrap();
        let mm = Encoder::fit(&data, false).unwrap().transform(&data).unwrap();
        let d = data.group_indicator().unwrap();
        let o = orthogonalize(&mm, &d).unwrap();
        let dm = mean(&d);
        let max_cov = (0..o.design.ncols())
            .map(|j| {
                let c = o.design.design.column(j).to_vec();
                let cm = mean(&c);
                (c.iter().zip(&d).map(|(x, y)| (x - cm) * (y - dm)).sum::<f64>() / c.len() as f64).abs()
            })
            .fold(0.0, f64::max);
        ok &= inv && max_cov < 1e-10;
        notes.push(format!("{name}: flip-invariant {inv}, max |cov| {max_cov:.1e}"));
    }
    let data = synth_generate(&GeneratorSpec::confounded(5000, 0.3), 43).unwrap();
    let mbc = fit_mbc(fit_mb(&glm, &data).unwrap(), &data).unwrap();
    let (pa, pb) = split_by(&mbc.predict(&data).unwrap(), &data.group_mask().unwrap());
    let stat = ks(&pa, &pb);
    ok &= stat < 0.05;
    notes.push(format!("MBC KS {stat:.4}"));
    ensure(ok, notes.join("; "))
}

fn c5_causal_forest() -> Outcome {
    let spec = GeneratorSpec::balanced(5000, 5.0);
    let data = synth_generate(&spec, 51).unwrap();
    let y_hat = spec.expected_premium(&data).unwrap();
    let start = Instant::now();
    let forest = causal_forest_fit(&data, &y_hat, &CausalForestParams::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let m = ite_summary(&forest).median;

    let mm = Encoder::fit(&data, false).unwrap().transform(&data).unwrap();
    let mut mask = data.group_mask().unwrap();
    mask.shuffle(&mut ChaCha8Rng::seed_from_u64(52));
    let shuffled = causal_forest_fit_matrix(&mm, &mask, &y_hat, &CausalForestParams::default()).unwrap();
    let m0 = ite_summary(&shuffled).median;
    let bound = 0.05 * sd(&y_hat);
    ensure(
        (4.5..=5.5).contains(&m) && m0.abs() < bound && secs < 120.0,
        format!("median {m:.3} in {secs:.1}s; shuffled median {m0:.4} (bound {bound:.4})"),
    )
}

fn c6_scm() -> Outcome {
    let x0 = [0.3, 1.2, -0.4];
    let donors: [&[f64]; 4] = [&[1.0, 0.0, 0.0], &[0.3, 1.2, -0.4], &[-2.0, 0.5, 3.0], &[0.7, 0.7, 0.7]];
    let exact = scm_weights(&x0, &donors, &[0.2, 0.5, 0.3]).map_err(|e| e.to_string())?;
    let half = scm_weights(&[5.0], &[&[4.0], &[6.0]], &[1.0]).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let p = rng.random_range(1..5);
        let k = rng.random_range(1..8);
        let x0: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let pool: Vec<Vec<f64>> = (0..k).map(|_| (0..p).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let refs: Vec<&[f64]> = pool.iter().map(Vec::as_slice).collect();
        let v: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..1.0)).collect();
        let s = scm_weights(&x0, &refs, &v).map_err(|e| e.to_string())?;
        let neg = s.weights.iter().fold(0.0_f64, |m, w| m.max(-w));
        worst = worst.max(neg).max((s.weights.iter().sum::<f64>() - 1.0).abs());
    }
    for w in [&exact.weights, &half.weights] {
        worst = worst.max(w.iter().fold(0.0_f64, |m, x| m.max(-x))).max((w.iter().sum::<f64>() - 1.0).abs());
    }
    let hw = &half.weights;
    ensure(
        exact.objective < 1e-8 && (hw[0] - 0.5).abs() < 1e-12 && (hw[1] - 0.5).abs() < 1e-12 && worst <= 1e-12,
        format!(
            "exact-copy objective {:.1e}; 1-D weights ({:.12}, {:.12}); worst simplex violation {worst:.1e}",
            exact.objective, hw[0], hw[1]
        ),
    )
}

fn c7_glm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let n = 10_000;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|&xi| Poisson::new((0.5 + 0.8 * xi).exp()).unwrap().sample(&mut rng)).collect();
    let m = glm_fit(&ModelMatrix::from_column("x", &x), &y, Family::Poisson, None).map_err(|e| e.to_string())?;
    let (b0, b1) = (m.coefficients[0], m.coefficients[1]);

    let null = |n: usize| ModelMatrix {
        design: ndarray::Array2::zeros((n, 0)),
        column_names: vec![],
    };
    let counts = [0.0, 1.0, 1.0, 2.0, 5.0, 3.0];
    let amounts = [120.0, 80.5, 300.0, 45.25];
    let gap_p = (glm_fit(&null(6), &counts, Family::Poisson, None).unwrap().coefficients[0] - mean(&counts).ln()).abs();
    let gap_g = (glm_fit(&null(4), &amounts, Family::Gamma, None).unwrap().coefficients[0] - mean(&amounts).ln()).abs();
    let gap_n = (glm_fit(&null(4), &amounts, Family::Gaussian, None).unwrap().coefficients[0] - mean(&amounts)).abs();
    let null_gap = gap_p.max(gap_g).max(gap_n);
    ensure(
        (b0 - 0.5).abs() <= 0.05 && (b1 - 0.8).abs() <= 0.05 && null_gap < 1e-8,
        format!("beta = ({b0:.4}, {b1:.4}); worst null-intercept gap {null_gap:.1e}"),
    )
}

fn c8_metrics() -> Outcome {
    let y = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
    let g_self = normalized_gini(&y, &y).map_err(|e| e.to_string())?;
    let g_rev = normalized_gini(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).map_err(|e| e.to_string())?;
    let yhat = [10.0, 12.0, 9.5, 14.0, 11.0, 8.0];
    let mask = [true, false, true, false, false, true];
    let base = disparity_impact_ratio(&yhat, &mask).unwrap();
    let scaled: Vec<f64> = yhat.iter().map(|v| v * 37.5).collect();
    let dir_gap = (disparity_impact_ratio(&scaled, &mask).unwrap() - base).abs();
    let data: Dataset = synth_generate(&GeneratorSpec::confounded(300, 0.3), 81).unwrap();
    let lip = local_lipschitz(&data, &vec![250.0; data.n_rows()], 0.95).map_err(|e| e.to_string())?;
    ensure(
        g_self == 1.0 && g_rev == -1.0 && dir_gap < 1e-12 && lip == 0.0,
        format!("gini(y,y) {g_self}; reversed {g_rev}; DIR scale gap {dir_gap:.1e}; constant Lipschitz {lip}"),
    )
}

fn strictly_dominates(u: &[f64; 4], v: &[f64; 4]) -> bool {
    u.iter().zip(v).all(|(a, b)| a < b)
}

fn c9_endpoints(run: &EnsembleRun) -> Outcome {
    let row = |m: &str| run.report.iter().find(|r| r.model == m).unwrap().objectives().to_array();
    let (mo, mscm) = (row("MO"), row("MSCM"));
    let (e1, e0) = (run.endpoints[0].to_array(), run.endpoints[1].to_array());
    let gap = (0..4).map(|j| (e1[j] - mo[j]).abs().max((e0[j] - mscm[j]).abs())).fold(0.0, f64::max);
    let sel = run.selected.objectives.to_array();
    let in_archive = run.archive.iter().any(|s| s.genome == run.selected.genome && s.objectives == run.selected.objectives);
    let rank_one = run.archive.iter().all(|s| !dominates(&s.objectives.to_array(), &sel));
    let undominated = !strictly_dominates(&mo, &sel) && !strictly_dominates(&mscm, &sel);
    ensure(
        gap < 1e-9 && in_archive && rank_one && undominated,
        format!("endpoint gap {gap:.1e}; selected in archive {in_archive}, rank-1 {rank_one}, not strictly dominated {undominated}"),
    )
}

fn c10_directional(run: &EnsembleRun, secs: f64) -> Outcome {
    let get = |m: &str| run.report.iter().find(|r| r.model == m).unwrap().objectives();
    let (ens, mo, mscm) = (get("Ensemble"), get("MO"), get("MSCM"));
    ensure(
        ens.dir_gap < mscm.dir_gap && ens.lipschitz < mo.lipschitz && secs < 600.0,
        format!(
            "|DIR-1| ensemble {:.4} vs MSCM {:.4}; Lipschitz ensemble {:.1} vs MO {:.1}; pipeline {secs:.1}s",
            ens.dir_gap, mscm.dir_gap, ens.lipschitz, mo.lipschitz
        ),
    )
}

fn c11_mnn() -> Outcome {
    let data = synth_generate(&GeneratorSpec::confounded(1500, 0.3), 111).unwrap();
    let params = MnnParams::default();
    let t = tune_lambda(&data, &[0.0, 100.0], 5, &params, 7).map_err(|e| e.to_string())?;
    let (s0, s100) = (&t.scores[0], &t.scores[1]);
    let again = tune_lambda(&data, &[0.0, 100.0], 5, &params, 7).map_err(|e| e.to_string())?;
    let disp = s100.disparity / s0.disparity;
    let mse = s100.validation_loss / s0.validation_loss - 1.0;
    ensure(
        disp < 0.1 && mse < 0.5 && t == again,
        format!(
            "disparity ratio {disp:.4}; validation MSE increase {:.1}%; deterministic {}",
            100.0 * mse,
            t == again
        ),
    )
}

fn c12_determinism() -> Outcome {
    let text = r#"{
        "seed": 12,
        "data": {"preset": {"name": "confounded", "n": 800, "tau": 0.3}},
        "ensemble": {
            "evolution": {"population": 10, "generations": 3},
            "evaluator": {"subsample": 400, "forest": {"n_trees": 30}}
        }
    }"#;
    let cfg = RunConfig::from_json(text).and_then(|c| c.resolve(None)).map_err(|e| e.to_string())?;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        cmd_ensemble(&cfg, d.path()).map_err(|e| e.to_string())?;
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join("ensemble").join(f)).unwrap();
    let same = ["pareto.csv", "selected.json"].iter().all(|f| read(&dirs[0], f) == read(&dirs[1], f));
    ensure(same, format!("pareto.csv and selected.json byte-identical: {same}"))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  criterion {id:>2} {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failures += 1;
                println!("FAIL  criterion {id:>2} {name}: {d} [{secs:.1}s]");
            }
        }
    };

    report(1, "nsga2 zdt1", &mut c1_zdt1);
    report(2, "dominance sort oracle", &mut c2_sort_oracle);
    report(3, "topsis hand case", &mut c3_topsis);
    report(4, "fairness by construction", &mut c4_by_construction);
    report(5, "causal forest oracle", &mut c5_causal_forest);
    report(6, "scm oracle", &mut c6_scm);
    report(7, "glm oracle", &mut c7_glm);
    report(8, "metric identities", &mut c8_metrics);

    let start = Instant::now();
    let data = synth_generate(&GeneratorSpec::confounded(5000, 0.3), 100).unwrap();
    let pipeline = catch_unwind(|| run_ensemble(&data, &EnsembleConfig::default()));
    let secs = start.elapsed().as_secs_f64();
    match pipeline {
        Ok(Ok(run)) => {
            report(9, "ensemble endpoints", &mut || c9_endpoints(&run));
            report(10, "directional replication", &mut || c10_directional(&run, secs));
        }
        other => {
            let msg = match other {
                Ok(Err(e)) => e.to_string(),
                _ => "pipeline panicked".to_string(),
            };
            report(9, "ensemble endpoints", &mut || Err(msg.clone()));
            report(10, "directional replication", &mut || Err(msg.clone()));
        }
    }

    report(11, "mnn lambda sweep", &mut c11_mnn);
    report(12, "end-to-end determinism", &mut c12_determinism);

    println!("acceptance: {} of 12 criteria passed", 12 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
