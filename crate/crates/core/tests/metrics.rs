mod common;

use common::*;
use fairprice_core::causalforest::CausalForestParams;
use fairprice_core::fairmodels::{fit_mb, fit_mu, EngineConfig};
use fairprice_core::metrics::*;

fn config() -> EvaluatorConfig {
    EvaluatorConfig {
        subsample: 800,
        forest: CausalForestParams {
            n_trees: 30,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn evaluator_agrees_with_standalone_metrics() {
    let data = confounded(1500, 0.3, 31);
    let p = fit_mb(&EngineConfig::glm(), &data).unwrap().predict(&data).unwrap();
    let ev = FairnessEvaluator::new(&data, config()).unwrap();
    let r = ev.report(&p).unwrap();
    assert_eq!(r.rmse, rmse(data.target(), &p).unwrap());
    assert_eq!(r.dir, disparity_impact_ratio(&p, &data.group_mask().unwrap()).unwrap());
    assert_eq!(r.gini, normalized_gini(data.target(), &p).unwrap());
    let o = ev.objectives(&p).unwrap();
    assert_eq!(o, objective_vector(&r));
    assert_eq!(ev.subsample_rows().len(), 800);
}

#[test]
fn evaluator_is_deterministic() {
    let data = confounded(1200, 0.3, 32);
    let p = fit_mb(&EngineConfig::glm(), &data).unwrap().predict(&data).unwrap();
    let a = FairnessEvaluator::new(&data, config()).unwrap().objectives(&p).unwrap();
    let b = FairnessEvaluator::new(&data, config()).unwrap().objectives(&p).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unaware_model_shows_smaller_counterfactual_gap() {
    let data = confounded(2000, 0.3, 33);
    let ev = FairnessEvaluator::new(&data, config()).unwrap();
    let mb = fit_mb(&EngineConfig::glm(), &data).unwrap().predict(&data).unwrap();
    let mu = fit_mu(&EngineConfig::glm(), &data).unwrap().predict(&data).unwrap();
    let (omb, omu) = (ev.objectives(&mb).unwrap(), ev.objectives(&mu).unwrap());
    assert!(omu.median_ite < omb.median_ite, "{omu:?} {omb:?}");
    assert!(omb.rmse <= omu.rmse);
}
