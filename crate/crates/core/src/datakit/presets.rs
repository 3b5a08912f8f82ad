//! Ready-made generator specifications used by the examples, benchmarks and
//! test suites.

use std::collections::BTreeMap;

use super::synth::{FeatureGen, GeneratorSpec, NumericDist, OutcomeSpec, PremiumSpec, SynthLink};
use crate::error::{domain, Result};

fn region(probs_a: Option<Vec<f64>>) -> FeatureGen {
    FeatureGen::Categorical {
        name: "region".into(),
        levels: vec!["north".into(), "south".into(), "urban".into()],
        probs: vec![0.4, 0.4, 0.2],
        probs_a,
    }
}

fn region_effects(south: f64, urban: f64) -> BTreeMap<String, BTreeMap<String, f64>> {
    let effects = BTreeMap::from([("south".to_string(), south), ("urban".to_string(), urban)]);
    BTreeMap::from([("region".to_string(), effects)])
}

impl GeneratorSpec {
    /// Motor-style table where `vehicle_power` and `region` act as proxies for
    /// the sensitive attribute and group `a` carries a direct log-scale effect
    /// `tau`. Claims are Gamma distributed around the premium.
    pub fn confounded(n: usize, tau: f64) -> Self {
        Self {
            n,
            group_shares: (0.45, 0.55),
            sensitive: "gender".into(),
            level_a: "F".into(),
            level_b: "M".into(),
            features: vec![
                FeatureGen::Numeric {
                    name: "age".into(),
                    dist: NumericDist::Normal { mean: 45.0, sd: 12.0 },
                    shift_a: 0.0,
                    clip: Some((18.0, 85.0)),
                },
                FeatureGen::Numeric {
                    name: "vehicle_power".into(),
                    dist: NumericDist::Normal { mean: 7.0, sd: 2.0 },
                    shift_a: -2.0,
                    clip: Some((1.0, 15.0)),
                },
                region(Some(vec![0.3, 0.3, 0.4])),
            ],
            premium: PremiumSpec {
                link: SynthLink::Log,
                intercept: 5.0,
                coefficients: BTreeMap::from([("age".to_string(), -0.01), ("vehicle_power".to_string(), 0.12)]),
                level_effects: region_effects(0.1, 0.3),
                tau,
            },
            outcome: OutcomeSpec::Gamma { shape: 2.0 },
            target: "claim_amount".into(),
            count_target: "claim_count".into(),
        }
    }

    /// Covariates identically distributed in both groups; the premium is
    /// `g(x) + tau * 1[D = a]` on the identity scale and observed exactly.
    pub fn balanced(n: usize, tau: f64) -> Self {
        Self {
            n,
            group_shares: (0.5, 0.5),
            sensitive: "gender".into(),
            level_a: "F".into(),
            level_b: "M".into(),
            features: vec![
                FeatureGen::Numeric {
                    name: "age".into(),
                    dist: NumericDist::Uniform { low: 18.0, high: 80.0 },
                    shift_a: 0.0,
                    clip: None,
                },
                FeatureGen::Numeric {
                    name: "vehicle_power".into(),
                    dist: NumericDist::Normal { mean: 7.0, sd: 2.0 },
                    shift_a: 0.0,
                    clip: Some((1.0, 15.0)),
                },
                region(None),
            ],
            premium: PremiumSpec {
                link: SynthLink::Identity,
                intercept: 50.0,
                coefficients: BTreeMap::from([("age".to_string(), 0.5), ("vehicle_power".to_string(), 3.0)]),
                level_effects: region_effects(4.0, 10.0),
                tau,
            },
            outcome: OutcomeSpec::Exact,
            target: "claim_amount".into(),
            count_target: "claim_count".into(),
        }
    }

    /// Frequency-severity variant of [`GeneratorSpec::confounded`]: Poisson
    /// claim counts with Gamma severities, so most rows have no claim.
    pub fn motor(n: usize, tau: f64) -> Self {
        let mut spec = Self::confounded(n, tau);
        spec.outcome = OutcomeSpec::Compound {
            severity_mean: 1500.0,
            severity_shape: 2.0,
        };
        spec
    }

    /// Looks up a preset by name: `confounded`, `balanced` or `motor`.
    pub fn preset(name: &str, n: usize, tau: f64) -> Result<Self> {
        match name {
            "confounded" => Ok(Self::confounded(n, tau)),
            "balanced" => Ok(Self::balanced(n, tau)),
            "motor" => Ok(Self::motor(n, tau)),
            other => domain(format!("unknown generator preset `{other}`")),
        }
    }
}
