//! The seven premium constructions: best estimate (MB), unaware (MU),
//! orthogonalized (MO), discrimination-free (MDF), barycentric (MBC),
//! synthetic-control (MSCM) and the counterfactual network (MNN).

mod barycenter;
mod engine;
mod mnn;
mod orthogonal;
mod risk;
mod scm;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use barycenter::BarycenterMap;
pub use engine::{fit_direct, fit_premium, fit_regressor, EngineConfig, EngineKind, PremiumModel, Regressor, Response};
pub use mnn::{
    fit_mnn, stratified_folds, tune_lambda, CompositeLoss, LambdaScore, LambdaTuning, LossParts, MnnFit, MnnModel,
    MnnParams,
};
pub use orthogonal::{orthogonalize, OrthogonalizedMatrix, Residualizer};
pub use risk::RiskScore;
pub use scm::{scm_adjust, scm_weights, ScmAdjustment, ScmRow, ScmSolution};

use crate::datakit::{Dataset, Encoder};
use crate::error::{Error, Result};
use crate::predictors::{forest_fit, ForestParams};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FairModelKind {
    Mb,
    Mu,
    Mo,
    Mdf,
    Mbc,
    Mscm,
    Mnn,
}

impl FairModelKind {
    pub const ALL: [FairModelKind; 7] = [
        FairModelKind::Mb,
        FairModelKind::Mu,
        FairModelKind::Mo,
        FairModelKind::Mdf,
        FairModelKind::Mbc,
        FairModelKind::Mscm,
        FairModelKind::Mnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FairModelKind::Mb => "MB",
            FairModelKind::Mu => "MU",
            FairModelKind::Mo => "MO",
            FairModelKind::Mdf => "MDF",
            FairModelKind::Mbc => "MBC",
            FairModelKind::Mscm => "MSCM",
            FairModelKind::Mnn => "MNN",
        }
    }

    /// Whether predictions consult the sensitive attribute when it is present.
    pub fn reads_sensitive(self) -> bool {
        matches!(self, FairModelKind::Mb | FairModelKind::Mbc | FairModelKind::Mnn | FairModelKind::Mo)
    }
}

impl std::str::FromStr for FairModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FairModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown model kind `{s}`")))
    }
}

/// Knobs shared by the fair-model constructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairConfig {
    pub engine: EngineConfig,
    pub forest: ForestParams,
    /// Donor pool size for synthetic-control matching.
    pub scm_k: usize,
    pub mnn: MnnParams,
    pub mnn_lambda: f64,
}

impl Default for FairConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            forest: ForestParams::default(),
            scm_k: 50,
            mnn: MnnParams::default(),
            mnn_lambda: 1.0,
        }
    }
}

/// Best estimate: the engine sees every covariate, the group indicator
/// included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbModel {
    pub encoder: Encoder,
    pub premium: PremiumModel,
}

impl MbModel {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        if !data.has_sensitive() {
            return Err(Error::Schema("the best-estimate model needs the sensitive attribute".into()));
        }
        self.premium.predict(&self.encoder.transform(data)?)
    }

    /// `mu(x, a)` (`in_a = true`) or `mu(x, b)` for every row.
    pub fn predict_as(&self, data: &Dataset, in_a: bool) -> Result<Vec<f64>> {
        let d = vec![if in_a { 1.0 } else { 0.0 }; data.n_rows()];
        self.premium.predict(&self.encoder.transform_with_indicator(data, Some(&d))?)
    }
}

/// Unaware: the sensitive attribute is dropped from the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuModel {
    pub encoder: Encoder,
    pub premium: PremiumModel,
}

impl MuModel {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.premium.predict(&self.encoder.transform(data)?)
    }
}

/// Orthogonalized: design columns residualized on the group indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoModel {
    pub encoder: Encoder,
    pub residualizer: Residualizer,
    pub premium: PremiumModel,
}

impl MoModel {
    /// Rows with a recorded group are residualized with it; without the
    /// sensitive column, the training group share is used instead.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mm = self.encoder.transform(data)?;
        let d = if data.has_sensitive() {
            Some(data.group_indicator()?)
        } else {
            None
        };
        let resid = self.residualizer.apply(&mm, d.as_deref())?;
        self.premium.predict(&resid)
    }
}

/// Discrimination-free: best estimate averaged over the group distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdfModel {
    pub mb: MbModel,
    pub p_a: f64,
    pub p_b: f64,
}

impl MdfModel {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let a = self.mb.predict_as(data, true)?;
        let b = self.mb.predict_as(data, false)?;
        Ok(a.iter().zip(&b).map(|(x, y)| predict_mdf(*x, *y, self.p_a)).collect())
    }
}

/// `mu(x, a) P(a) + mu(x, b) P(b)`.
pub fn predict_mdf(mu_a: f64, mu_b: f64, p_a: f64) -> f64 {
    mu_a * p_a + mu_b * (1.0 - p_a)
}

/// Barycentric correction of the best estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbcModel {
    pub mb: MbModel,
    pub map: BarycenterMap,
}

impl MbcModel {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let s = self.mb.predict(data)?;
        let mask = data.group_mask()?;
        Ok(s.iter().zip(&mask).map(|(v, a)| self.map.transport(*v, *a)).collect())
    }
}

/// Engine trained on synthetic-control adjusted claims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MscmModel {
    pub encoder: Encoder,
    pub premium: PremiumModel,
    /// Matching weights (normalized forest importances).
    pub v: Vec<f64>,
    pub k: usize,
}

impl MscmModel {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.premium.predict(&self.encoder.transform(data)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FairModel {
    #[serde(rename = "MB")]
    Mb(MbModel),
    #[serde(rename = "MU")]
    Mu(MuModel),
    #[serde(rename = "MO")]
    Mo(MoModel),
    #[serde(rename = "MDF")]
    Mdf(MdfModel),
    #[serde(rename = "MBC")]
    Mbc(MbcModel),
    #[serde(rename = "MSCM")]
    Mscm(MscmModel),
    #[serde(rename = "MNN")]
    Mnn(MnnModel),
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format_version: u32,
    #[serde(flatten)]
    model: T,
}

impl FairModel {
    pub fn kind(&self) -> FairModelKind {
        match self {
            FairModel::Mb(_) => FairModelKind::Mb,
            FairModel::Mu(_) => FairModelKind::Mu,
            FairModel::Mo(_) => FairModelKind::Mo,
            FairModel::Mdf(_) => FairModelKind::Mdf,
            FairModel::Mbc(_) => FairModelKind::Mbc,
            FairModel::Mscm(_) => FairModelKind::Mscm,
            FairModel::Mnn(_) => FairModelKind::Mnn,
        }
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        match self {
            FairModel::Mb(m) => m.predict(data),
            FairModel::Mu(m) => m.predict(data),
            FairModel::Mo(m) => m.predict(data),
            FairModel::Mdf(m) => m.predict(data),
            FairModel::Mbc(m) => m.predict(data),
            FairModel::Mscm(m) => m.predict(data),
            FairModel::Mnn(m) => m.predict(data),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Envelope {
            format_version: FORMAT_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => return Err(Error::Format(format!("model format version {v}, expected {FORMAT_VERSION}"))),
            None => return Err(Error::Format("missing format_version".into())),
        }
        let env: Envelope<FairModel> = serde_json::from_value(value)?;
        Ok(env.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn fit_mb(engine: &EngineConfig, data: &Dataset) -> Result<MbModel> {
    let encoder = Encoder::fit(data, true)?;
    let mm = encoder.transform(data)?;
    let premium = fit_premium(engine, &mm, data.target(), data)?;
    Ok(MbModel { encoder, premium })
}

pub fn fit_mu(engine: &EngineConfig, data: &Dataset) -> Result<MuModel> {
    let encoder = Encoder::fit(data, false)?;
    let mm = encoder.transform(data)?;
    let premium = fit_premium(engine, &mm, data.target(), data)?;
    Ok(MuModel { encoder, premium })
}

pub fn fit_mo(engine: &EngineConfig, data: &Dataset) -> Result<MoModel> {
    let encoder = Encoder::fit(data, false)?;
    let mm = encoder.transform(data)?;
    let ortho = orthogonalize(&mm, &data.group_indicator()?)?;
    let premium = fit_premium(engine, &ortho.design, data.target(), data)?;
    Ok(MoModel {
        encoder,
        residualizer: ortho.betas,
        premium,
    })
}

pub fn fit_mdf(mb: MbModel, data: &Dataset) -> Result<MdfModel> {
    let (p_a, p_b) = data.group_proportions()?;
    Ok(MdfModel { mb, p_a, p_b })
}

pub fn fit_mbc(mb: MbModel, data: &Dataset) -> Result<MbcModel> {
    let s = mb.predict(data)?;
    let mask = data.group_mask()?;
    let a: Vec<f64> = s.iter().zip(&mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
    let b: Vec<f64> = s.iter().zip(&mask).filter(|(_, m)| !**m).map(|(v, _)| *v).collect();
    let (p_a, p_b) = data.group_proportions()?;
    let map = BarycenterMap::new(&a, &b, p_a, p_b)?;
    Ok(MbcModel { mb, map })
}

/// Synthetic-control model plus the adjustment table it was trained on. The
/// engine is always fit directly on the adjusted claim amounts.
pub fn fit_mscm(config: &FairConfig, data: &Dataset) -> Result<(MscmModel, ScmAdjustment)> {
    let encoder = Encoder::fit(data, false)?;
    let mm = encoder.transform(data)?;
    let forest = forest_fit(&mm, data.target(), &config.forest)?;
    let adjustment = scm_adjust(data, &mm, &forest.importances, config.scm_k)?;
    let premium = fit_direct(&config.engine, &mm, &adjustment.adjusted_target())?;
    Ok((
        MscmModel {
            encoder,
            premium,
            v: adjustment.v.clone(),
            k: config.scm_k,
        },
        adjustment,
    ))
}

/// Fits one model kind with the shared configuration.
pub fn fit_fair(kind: FairModelKind, config: &FairConfig, data: &Dataset) -> Result<FairModel> {
    Ok(match kind {
        FairModelKind::Mb => FairModel::Mb(fit_mb(&config.engine, data)?),
        FairModelKind::Mu => FairModel::Mu(fit_mu(&config.engine, data)?),
        FairModelKind::Mo => FairModel::Mo(fit_mo(&config.engine, data)?),
        FairModelKind::Mdf => FairModel::Mdf(fit_mdf(fit_mb(&config.engine, data)?, data)?),
        FairModelKind::Mbc => FairModel::Mbc(fit_mbc(fit_mb(&config.engine, data)?, data)?),
        FairModelKind::Mscm => FairModel::Mscm(fit_mscm(config, data)?.0),
        FairModelKind::Mnn => FairModel::Mnn(fit_mnn(data, config.mnn_lambda, &config.mnn)?.model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mdf_examples() {
        assert!((predict_mdf(10.0, 20.0, 0.4) - 16.0).abs() < 1e-12);
        assert_eq!(predict_mdf(10.0, 20.0, 1.0), 10.0);
        assert_eq!(predict_mdf(7.0, 7.0, 0.3), 7.0);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in FairModelKind::ALL {
            assert_eq!(k.name().parse::<FairModelKind>().unwrap(), k);
        }
        assert!("XX".parse::<FairModelKind>().is_err());
    }
}
