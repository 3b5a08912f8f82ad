mod common;

use common::*;
use fairprice_core::ensemble::*;
use fairprice_core::fairmodels::{fit_mo, fit_mscm, FairConfig};
use fairprice_core::metrics::FairnessEvaluator;
use fairprice_core::moo::dominates;

fn strictly_dominates(u: &[f64; 4], v: &[f64; 4]) -> bool {
    u.iter().zip(v).all(|(a, b)| a < b)
}

#[test]
fn genome_round_trip_and_zero_gate() {
    let data = confounded(600, 0.3, 41);
    let config = FairConfig::default();
    let mo = fit_mo(&config.engine, &data).unwrap();
    let (mscm, _) = fit_mscm(&config, &data).unwrap();
    let (pm, ps) = (mo.predict(&data).unwrap(), mscm.predict(&data).unwrap());
    let evaluator = FairnessEvaluator::new(&data, Default::default()).unwrap();
    let ensemble_cfg = EnsembleConfig::default();
    let run = EnsembleConfig {
        evolution: EvolutionSettings {
            population: 4,
            generations: 0,
            ..Default::default()
        },
        ..ensemble_cfg
    };
    let out = run_ensemble(&data, &run).unwrap();
    let meta = &out.model.meta;
    let width = meta.center.len();
    assert_eq!(meta.genome_length(), (width + 1) * 8 + 9);
    let genome: Vec<f64> = (0..meta.genome_length()).map(|i| (i as f64 * 0.37).sin()).collect();
    assert_eq!(meta.decode(&genome).unwrap().encode(), genome);
    let zero = meta.decode(&vec![0.0; meta.genome_length()]).unwrap();
    let x = zero.inputs(&data, &pm, &ps).unwrap();
    assert!(zero.gates(x.view()).unwrap().iter().all(|g| *g == 0.5));
    let ctx = EvaluationContext::new(meta.clone(), &data, pm.clone(), ps.clone(), evaluator).unwrap();
    let g: Vec<f64> = genome.iter().map(|v| 3.0 * v).collect();
    let blended = ctx.predictions(&g).unwrap();
    for i in 0..blended.len() {
        assert!(blended[i] >= pm[i].min(ps[i]) - 1e-9 && blended[i] <= pm[i].max(ps[i]) + 1e-9);
    }
    let first = ctx.evaluate_genome(&g);
    assert_eq!(ctx.cache_len(), 1);
    assert_eq!(ctx.evaluate_genome(&g), first);
    assert_eq!(ctx.cache_len(), 1);
}

#[test]
fn endpoints_reproduce_base_models() {
    let data = confounded(2000, 0.3, 42);
    let config = EnsembleConfig {
        evolution: EvolutionSettings {
            population: 10,
            generations: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = run_ensemble(&data, &config).unwrap();
    let row = |m: &str| run.report.iter().find(|r| r.model == m).unwrap().objectives().to_array();
    let (mo, mscm) = (row("MO"), row("MSCM"));
    let (e1, e0) = (run.endpoints[0].to_array(), run.endpoints[1].to_array());
    for j in 0..4 {
        assert!((e1[j] - mo[j]).abs() < 1e-9, "{e1:?} {mo:?}");
        assert!((e0[j] - mscm[j]).abs() < 1e-9, "{e0:?} {mscm:?}");
    }
    let sel = run.selected.objectives.to_array();
    assert!(run.archive.iter().any(|s| s.objectives == run.selected.objectives));
    assert!(!strictly_dominates(&mo, &sel) && !strictly_dominates(&mscm, &sel));
    for a in &run.archive {
        for b in &run.archive {
            assert!(!dominates(&b.objectives.to_array(), &a.objectives.to_array()));
        }
    }
}
