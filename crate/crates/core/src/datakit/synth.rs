//! Synthetic pricing tables with a known premium function.
//!
//! The expected pure premium is `g(x) + tau * 1[D = a]` on the link scale,
//! where `g` is linear in the numeric features and additive in categorical
//! level effects. Numeric features may be shifted in group `a` to act as
//! proxies for the sensitive attribute.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Provenance, RawColumn};
use super::schema::{ColumnSpec, Schema};
use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NumericDist {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureGen {
    Numeric {
        name: String,
        dist: NumericDist,
        /// Added to the draw for rows in group `a`.
        #[serde(default)]
        shift_a: f64,
        #[serde(default)]
        clip: Option<(f64, f64)>,
    },
    Categorical {
        name: String,
        levels: Vec<String>,
        probs: Vec<f64>,
        /// Level probabilities for group `a`; `probs` applies to group `b`
        /// (and to both groups when absent).
        #[serde(default)]
        probs_a: Option<Vec<f64>>,
    },
}

impl FeatureGen {
    pub fn name(&self) -> &str {
        match self {
            FeatureGen::Numeric { name, .. } | FeatureGen::Categorical { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthLink {
    Identity,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiumSpec {
    pub link: SynthLink,
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    /// Per categorical feature, additive effect of each level (missing levels: 0).
    #[serde(default)]
    pub level_effects: BTreeMap<String, BTreeMap<String, f64>>,
    /// Direct effect of belonging to group `a`.
    #[serde(default)]
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutcomeSpec {
    /// Claim equals the expected premium.
    Exact,
    Gaussian { sd: f64 },
    Poisson,
    Gamma { shape: f64 },
    /// Poisson claim count with Gamma severities; writes a count column.
    Compound { severity_mean: f64, severity_shape: f64 },
}

fn default_sensitive() -> String {
    "gender".into()
}
fn default_level_a() -> String {
    "F".into()
}
fn default_level_b() -> String {
    "M".into()
}
fn default_target() -> String {
    "claim_amount".into()
}
fn default_count() -> String {
    "claim_count".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    /// `(P(D = a), P(D = b))`.
    pub group_shares: (f64, f64),
    #[serde(default = "default_sensitive")]
    pub sensitive: String,
    #[serde(default = "default_level_a")]
    pub level_a: String,
    #[serde(default = "default_level_b")]
    pub level_b: String,
    pub features: Vec<FeatureGen>,
    pub premium: PremiumSpec,
    pub outcome: OutcomeSpec,
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default = "default_count")]
    pub count_target: String,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let (pa, pb) = self.group_shares;
        if !(pa > 0.0 && pb > 0.0 && ((pa + pb) - 1.0).abs() < 1e-9) {
            return domain(format!("group shares ({pa}, {pb}) must be positive and sum to 1"));
        }
        if self.n < 2 {
            return domain("generator needs n >= 2");
        }
        if self.level_a == self.level_b {
            return domain("sensitive levels must differ");
        }
        let mut names = std::collections::BTreeSet::new();
        for f in &self.features {
            if !names.insert(f.name()) {
                return domain(format!("duplicate feature `{}`", f.name()));
            }
            match f {
                FeatureGen::Numeric { dist, .. } => match dist {
                    NumericDist::Normal { sd, .. } if *sd < 0.0 => return domain("normal sd must be >= 0"),
                    NumericDist::Uniform { low, high } if high < low => return domain("uniform needs low <= high"),
                    NumericDist::LogNormal { sigma, .. } if *sigma < 0.0 => return domain("lognormal sigma must be >= 0"),
                    _ => {}
                },
                FeatureGen::Categorical {
                    levels, probs, probs_a, ..
                } => {
                    for p in std::iter::once(probs).chain(probs_a.iter()) {
                        if p.len() != levels.len() || p.iter().any(|v| *v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                            return domain(format!("invalid level probabilities for `{}`", f.name()));
                        }
                    }
                }
            }
        }
        for reserved in [&self.sensitive, &self.target, &self.count_target] {
            if names.contains(reserved.as_str()) {
                return domain(format!("feature name `{reserved}` clashes with a role column"));
            }
        }
        match self.outcome {
            OutcomeSpec::Gaussian { sd } if sd < 0.0 => domain("gaussian sd must be >= 0"),
            OutcomeSpec::Gamma { shape } if shape <= 0.0 => domain("gamma shape must be > 0"),
            OutcomeSpec::Compound {
                severity_mean,
                severity_shape,
            } if severity_mean <= 0.0 || severity_shape <= 0.0 => domain("compound severity parameters must be > 0"),
            _ => Ok(()),
        }
    }

    pub fn schema(&self) -> Schema {
        let mut columns: Vec<ColumnSpec> = self
            .features
            .iter()
            .map(|f| match f {
                FeatureGen::Numeric { name, .. } => ColumnSpec::numeric(name.clone()),
                FeatureGen::Categorical { name, .. } => ColumnSpec::categorical(name.clone()),
            })
            .collect();
        columns.push(ColumnSpec::categorical(self.sensitive.clone()));
        let compound = matches!(self.outcome, OutcomeSpec::Compound { .. });
        if compound {
            columns.push(ColumnSpec::numeric(self.count_target.clone()));
        }
        columns.push(ColumnSpec::numeric(self.target.clone()));
        Schema {
            columns,
            sensitive: self.sensitive.clone(),
            group_a: Some(self.level_a.clone()),
            target: self.target.clone(),
            count_target: compound.then(|| self.count_target.clone()),
            exposure: None,
            permitted: None,
        }
    }

    fn linear_predictor(&self, numeric: &BTreeMap<&str, f64>, cats: &BTreeMap<&str, &str>, is_a: bool) -> f64 {
        let p = &self.premium;
        let mut eta = p.intercept;
        for (name, beta) in &p.coefficients {
            eta += beta * numeric.get(name.as_str()).copied().unwrap_or(0.0);
        }
        for (name, effects) in &p.level_effects {
            if let Some(level) = cats.get(name.as_str()) {
                eta += effects.get(*level).copied().unwrap_or(0.0);
            }
        }
        if is_a {
            eta += p.tau;
        }
        eta
    }

    fn inverse_link(&self, eta: f64) -> f64 {
        match self.premium.link {
            SynthLink::Identity => eta,
            SynthLink::Log => eta.exp(),
        }
    }

    /// Ground-truth expected claim per row of a dataset drawn from this spec.
    pub fn expected_premium(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mask = data.group_mask()?;
        let mut numeric = Vec::new();
        let mut cats = Vec::new();
        for f in &self.features {
            match f {
                FeatureGen::Numeric { name, .. } => numeric.push((name.as_str(), data.numeric(name)?)),
                FeatureGen::Categorical { name, .. } => {
                    let (levels, codes) = data.categorical(name)?;
                    cats.push((name.as_str(), levels, codes));
                }
            }
        }
        Ok((0..data.n_rows())
            .map(|i| {
                let nm: BTreeMap<&str, f64> = numeric.iter().map(|(n, v)| (*n, v[i])).collect();
                let cm: BTreeMap<&str, &str> = cats
                    .iter()
                    .map(|(n, levels, codes)| (*n, levels[codes[i] as usize].as_str()))
                    .collect();
                self.inverse_link(self.linear_predictor(&nm, &cm, mask[i]))
            })
            .collect())
    }
}

fn draw_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Draws a dataset from `spec`; the same seed always yields the same table.
pub fn synth_generate(spec: &GeneratorSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n;
    let mut numeric_cols: Vec<Vec<f64>> = Vec::new();
    let mut cat_cols: Vec<Vec<String>> = Vec::new();
    for f in &spec.features {
        match f {
            FeatureGen::Numeric { .. } => numeric_cols.push(Vec::with_capacity(n)),
            FeatureGen::Categorical { .. } => cat_cols.push(Vec::with_capacity(n)),
        }
    }
    let mut sensitive = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    let mut claims = Vec::with_capacity(n);

    for _ in 0..n {
        let is_a = rng.random::<f64>() < spec.group_shares.0;
        let mut nm = BTreeMap::new();
        let mut cm = BTreeMap::new();
        let (mut ni, mut ci) = (0, 0);
        for f in &spec.features {
            match f {
                FeatureGen::Numeric {
                    name,
                    dist,
                    shift_a,
                    clip,
                } => {
                    let mut x = match dist {
                        NumericDist::Normal { mean, sd } => Normal::new(*mean, *sd).expect("validated").sample(&mut rng),
                        NumericDist::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
                        NumericDist::LogNormal { mu, sigma } => LogNormal::new(*mu, *sigma).expect("validated").sample(&mut rng),
                    };
                    if is_a {
                        x += shift_a;
                    }
                    if let Some((lo, hi)) = clip {
                        x = x.clamp(*lo, *hi);
                    }
                    numeric_cols[ni].push(x);
                    nm.insert(name.as_str(), x);
                    ni += 1;
                }
                FeatureGen::Categorical {
                    name,
                    levels,
                    probs,
                    probs_a,
                } => {
                    let p = match (is_a, probs_a) {
                        (true, Some(pa)) => pa,
                        _ => probs,
                    };
                    let level = &levels[draw_categorical(&mut rng, p)];
                    cat_cols[ci].push(level.clone());
                    cm.insert(name.as_str(), level.as_str());
                    ci += 1;
                }
            }
        }
        let mu = spec.inverse_link(spec.linear_predictor(&nm, &cm, is_a));
        if !(mu.is_finite() && mu >= 0.0) {
            return domain(format!("generator premium {mu} is not a valid nonnegative mean"));
        }
        let y = match spec.outcome {
            OutcomeSpec::Exact => mu,
            OutcomeSpec::Gaussian { sd } => (mu + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)).max(0.0),
            OutcomeSpec::Poisson => {
                if mu > 0.0 {
                    Poisson::new(mu).expect("positive mean").sample(&mut rng)
                } else {
                    0.0
                }
            }
            OutcomeSpec::Gamma { shape } => {
                if mu > 0.0 {
                    Gamma::new(shape, mu / shape).expect("positive").sample(&mut rng)
                } else {
                    0.0
                }
            }
            OutcomeSpec::Compound {
                severity_mean,
                severity_shape,
            } => {
                let lambda = mu / severity_mean;
                let k = if lambda > 0.0 {
                    Poisson::new(lambda).expect("positive").sample(&mut rng) as u64
                } else {
                    0
                };
                let sev = Gamma::new(severity_shape, severity_mean / severity_shape).expect("positive");
                counts.push(k as f64);
                (0..k).map(|_| sev.sample(&mut rng)).sum()
            }
        };
        sensitive.push(if is_a { spec.level_a.clone() } else { spec.level_b.clone() });
        claims.push(y);
    }

    let mut raw = Vec::new();
    let (mut ni, mut ci) = (0, 0);
    for f in &spec.features {
        match f {
            FeatureGen::Numeric { .. } => {
                raw.push(RawColumn::Numeric(std::mem::take(&mut numeric_cols[ni])));
                ni += 1;
            }
            FeatureGen::Categorical { .. } => {
                raw.push(RawColumn::Categorical(std::mem::take(&mut cat_cols[ci])));
                ci += 1;
            }
        }
    }
    raw.push(RawColumn::Categorical(sensitive));
    if matches!(spec.outcome, OutcomeSpec::Compound { .. }) {
        raw.push(RawColumn::Numeric(counts));
    }
    raw.push(RawColumn::Numeric(claims));
    let data = Dataset::from_columns(spec.schema(), raw, 0)?;
    Ok(data.with_provenance(Provenance {
        source: None,
        generator: Some(spec.clone()),
        seed: Some(seed),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(n: usize, tau: f64) -> GeneratorSpec {
        GeneratorSpec {
            n,
            group_shares: (0.4, 0.6),
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
                FeatureGen::Categorical {
                    name: "region".into(),
                    levels: vec!["N".into(), "S".into()],
                    probs: vec![0.5, 0.5],
                    probs_a: None,
                },
            ],
            premium: PremiumSpec {
                link: SynthLink::Identity,
                intercept: 100.0,
                coefficients: [("age".to_string(), 1.0)].into_iter().collect(),
                level_effects: BTreeMap::new(),
                tau,
            },
            outcome: OutcomeSpec::Exact,
            target: "claim_amount".into(),
            count_target: "claim_count".into(),
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let s = spec(200, 5.0);
        let mut a = Vec::new();
        let mut b = Vec::new();
        synth_generate(&s, 11).unwrap().write_csv(&mut a).unwrap();
        synth_generate(&s, 11).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        synth_generate(&s, 12).unwrap().write_csv(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_tau_gives_equal_conditional_means() {
        let s = spec(500, 0.0);
        let d = synth_generate(&s, 3).unwrap();
        let truth = s.expected_premium(&d).unwrap();
        let flipped = s.expected_premium(&d.with_flipped_sensitive().unwrap()).unwrap();
        assert_eq!(truth, flipped);
    }

    #[test]
    fn group_counts_within_binomial_band() {
        let s = spec(10_000, 0.0);
        let d = synth_generate(&s, 99).unwrap();
        let a = d.group_mask().unwrap().iter().filter(|&&a| a).count() as f64;
        // binomial oracle: mean n p, sd sqrt(n p (1 - p))
        let sd = (10_000.0f64 * 0.4 * 0.6).sqrt();
        assert!((a - 4000.0).abs() < 3.0 * sd, "group a count {a}");
    }

    #[test]
    fn invalid_shares_rejected() {
        let mut s = spec(10, 0.0);
        s.group_shares = (0.5, 0.6);
        assert!(synth_generate(&s, 1).is_err());
        s.group_shares = (0.0, 1.0);
        assert!(synth_generate(&s, 1).is_err());
    }

    #[test]
    fn compound_outcome_writes_counts() {
        let mut s = spec(300, 0.0);
        s.outcome = OutcomeSpec::Compound {
            severity_mean: 50.0,
            severity_shape: 2.0,
        };
        let d = synth_generate(&s, 4).unwrap();
        let counts = d.count_target().unwrap();
        let y = d.target();
        for (k, y) in counts.iter().zip(y) {
            assert_eq!(*k == 0.0, *y == 0.0);
        }
    }
}
