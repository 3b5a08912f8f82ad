use serde::{Deserialize, Serialize};

use crate::datakit::{Dataset, Encoder};
use crate::error::Result;
use crate::predictors::{glm_fit, Family, GlmModel};

/// Auxiliary GLM over a chosen set of risk-factor columns whose prediction is
/// appended to the table as one extra numeric rating factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub name: String,
    pub encoder: Encoder,
    pub model: GlmModel,
}

impl RiskScore {
    pub fn fit(data: &Dataset, columns: &[String], name: &str) -> Result<Self> {
        let encoder = Encoder::fit_subset(data, columns, false)?;
        let mm = encoder.transform(data)?;
        let y = data.target();
        let family = if y.iter().all(|v| *v > 0.0) {
            Family::Gamma
        } else {
            Family::Poisson
        };
        Ok(Self {
            name: name.to_string(),
            encoder,
            model: glm_fit(&mm, y, family, None)?,
        })
    }

    pub fn score(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.model.predict(&self.encoder.transform(data)?)
    }

    /// `data` with the score appended as a numeric column.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        data.with_numeric_column(&self.name, self.score(data)?)
    }
}
