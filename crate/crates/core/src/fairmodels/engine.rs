use serde::{Deserialize, Serialize};

use crate::datakit::{Dataset, ModelMatrix};
use crate::error::{domain, Result};
use crate::predictors::{gbt_fit, glm_fit, Family, GbtLoss, GbtModel, GbtParams, GlmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Glm,
    Gbt,
}

/// Which statistical engine a fair model trains, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub kind: EngineKind,
    pub gbt: GbtParams,
    /// Model claim counts (Poisson) and severities (Gamma) separately when the
    /// table has a count target.
    pub frequency_severity: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            kind: EngineKind::Glm,
            gbt: GbtParams::default(),
            frequency_severity: false,
        }
    }
}

impl EngineConfig {
    pub fn glm() -> Self {
        Self::default()
    }

    pub fn gbt(params: GbtParams) -> Self {
        Self {
            kind: EngineKind::Gbt,
            gbt: params,
            frequency_severity: false,
        }
    }
}

/// One fitted engine on a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "lowercase")]
pub enum Regressor {
    Glm(GlmModel),
    Gbt(GbtModel),
}

impl Regressor {
    pub fn predict(&self, mm: &ModelMatrix) -> Result<Vec<f64>> {
        match self {
            Regressor::Glm(m) => m.predict(mm),
            Regressor::Gbt(m) => m.predict(mm),
        }
    }
}

/// Target distribution family for a regressor fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    Count,
    Positive,
    NonNegative,
}

impl Response {
    /// Gamma when every value is strictly positive, otherwise a Poisson
    /// (quasi-likelihood) fit.
    pub fn of_amounts(y: &[f64]) -> Self {
        if y.iter().all(|v| *v > 0.0) {
            Response::Positive
        } else {
            Response::NonNegative
        }
    }
}

pub fn fit_regressor(
    config: &EngineConfig,
    mm: &ModelMatrix,
    y: &[f64],
    response: Response,
    weights: Option<&[f64]>,
) -> Result<Regressor> {
    match config.kind {
        EngineKind::Glm => {
            let family = match response {
                Response::Positive => Family::Gamma,
                Response::Count | Response::NonNegative => Family::Poisson,
            };
            Ok(Regressor::Glm(glm_fit(mm, y, family, weights)?))
        }
        EngineKind::Gbt => {
            // boosted fits ignore row weights
            let loss = match response {
                Response::Positive => GbtLoss::GammaDeviance,
                Response::Count | Response::NonNegative => GbtLoss::PoissonDeviance,
            };
            Ok(Regressor::Gbt(gbt_fit(mm, y, loss, &config.gbt)?))
        }
    }
}

/// Pure-premium model: either a direct fit on claim amounts or a product of
/// frequency and severity fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "structure", rename_all = "snake_case")]
pub enum PremiumModel {
    Direct { model: Regressor },
    FrequencySeverity { frequency: Regressor, severity: Regressor },
}

impl PremiumModel {
    pub fn predict(&self, mm: &ModelMatrix) -> Result<Vec<f64>> {
        match self {
            PremiumModel::Direct { model } => model.predict(mm),
            PremiumModel::FrequencySeverity { frequency, severity } => {
                let f = frequency.predict(mm)?;
                let s = severity.predict(mm)?;
                Ok(f.iter().zip(&s).map(|(a, b)| a * b).collect())
            }
        }
    }
}

/// Fits a premium model on `mm` for target `y`; uses the table's claim counts
/// when frequency-severity modelling is enabled.
pub fn fit_premium(config: &EngineConfig, mm: &ModelMatrix, y: &[f64], data: &Dataset) -> Result<PremiumModel> {
    match (config.frequency_severity, data.count_target()) {
        (true, Some(counts)) => fit_frequency_severity(config, mm, y, counts),
        (true, None) => domain("frequency-severity modelling needs a count target"),
        (false, _) => fit_direct(config, mm, y),
    }
}

pub fn fit_direct(config: &EngineConfig, mm: &ModelMatrix, y: &[f64]) -> Result<PremiumModel> {
    Ok(PremiumModel::Direct {
        model: fit_regressor(config, mm, y, Response::of_amounts(y), None)?,
    })
}

fn fit_frequency_severity(config: &EngineConfig, mm: &ModelMatrix, y: &[f64], counts: &[f64]) -> Result<PremiumModel> {
    let frequency = fit_regressor(config, mm, counts, Response::Count, None)?;
    let claimants: Vec<usize> = (0..y.len()).filter(|&i| counts[i] > 0.0 && y[i] > 0.0).collect();
    if claimants.len() < 2 {
        return domain("too few rows with claims to fit a severity model");
    }
    let sub = ModelMatrix {
        design: mm.design.select(ndarray::Axis(0), &claimants),
        column_names: mm.column_names.clone(),
    };
    let sev: Vec<f64> = claimants.iter().map(|&i| y[i] / counts[i]).collect();
    let w: Vec<f64> = claimants.iter().map(|&i| counts[i]).collect();
    let severity = fit_regressor(config, &sub, &sev, Response::Positive, Some(&w))?;
    Ok(PremiumModel::FrequencySeverity { frequency, severity })
}
