use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{Column, Dataset};
use crate::error::{Error, Result};

/// Numeric design matrix aligned row-for-row with a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrix {
    pub design: Array2<f64>,
    pub column_names: Vec<String>,
}

impl ModelMatrix {
    pub fn new(design: Array2<f64>, column_names: Vec<String>) -> Result<Self> {
        if design.ncols() != column_names.len() {
            return Err(Error::Dimension {
                expected: column_names.len(),
                found: design.ncols(),
            });
        }
        if design.ncols() == 0 {
            return Err(Error::Schema("model matrix needs at least one column".into()));
        }
        Ok(Self { design, column_names })
    }

    /// Single-feature matrix, mostly for tests and examples.
    pub fn from_column(name: &str, x: &[f64]) -> Self {
        let design = Array2::from_shape_vec((x.len(), 1), x.to_vec()).expect("shape");
        Self {
            design,
            column_names: vec![name.to_string()],
        }
    }

    pub fn from_rows(names: &[&str], rows: &[Vec<f64>]) -> Result<Self> {
        let p = names.len();
        let mut flat = Vec::with_capacity(rows.len() * p);
        for r in rows {
            if r.len() != p {
                return Err(Error::Dimension { expected: p, found: r.len() });
            }
            flat.extend_from_slice(r);
        }
        let design = Array2::from_shape_vec((rows.len(), p), flat).expect("shape");
        Self::new(design, names.iter().map(|s| s.to_string()).collect())
    }

    pub fn nrows(&self) -> usize {
        self.design.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.design.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodedFeature {
    Numeric { name: String },
    /// `levels[0]` is the dropped reference level.
    Categorical { name: String, levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveTerm {
    pub column: String,
    pub level_a: String,
}

/// Deterministic one-hot encoding of the non-protected features, optionally
/// followed by the `1[D = a]` indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    features: Vec<EncodedFeature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sensitive: Option<SensitiveTerm>,
}

impl Encoder {
    /// Learns levels from the rows actually present in `data`.
    pub fn fit(data: &Dataset, include_sensitive: bool) -> Result<Self> {
        Self::fit_inner(data, None, include_sensitive)
    }

    /// Like [`Encoder::fit`], restricted to the named features.
    pub fn fit_subset(data: &Dataset, features: &[String], include_sensitive: bool) -> Result<Self> {
        let names = data.schema().feature_names();
        if let Some(bad) = features.iter().find(|f| !names.contains(&f.as_str())) {
            return Err(Error::Schema(format!("`{bad}` is not a non-protected feature")));
        }
        Self::fit_inner(data, Some(features), include_sensitive)
    }

    fn fit_inner(data: &Dataset, only: Option<&[String]>, include_sensitive: bool) -> Result<Self> {
        let schema = data.schema();
        let mut features = Vec::new();
        for j in schema.feature_indices() {
            let name = schema.columns[j].name.clone();
            if only.is_some_and(|o| !o.contains(&name)) {
                continue;
            }
            match &data.columns()[j] {
                Column::Numeric(_) => features.push(EncodedFeature::Numeric { name }),
                Column::Categorical { levels, codes } => {
                    let mut seen = vec![false; levels.len()];
                    for &c in codes {
                        seen[c as usize] = true;
                    }
                    let observed = levels
                        .iter()
                        .zip(seen)
                        .filter(|(_, s)| *s)
                        .map(|(l, _)| l.clone())
                        .collect();
                    features.push(EncodedFeature::Categorical { name, levels: observed });
                }
                Column::Absent => return Err(Error::Schema(format!("feature `{name}` withheld"))),
            }
        }
        let sensitive = if include_sensitive {
            let (level_a, _) = data.sensitive_levels()?;
            Some(SensitiveTerm {
                column: schema.sensitive.clone(),
                level_a,
            })
        } else {
            None
        };
        let enc = Self { features, sensitive };
        if enc.column_names().is_empty() {
            return Err(Error::Schema("encoding produces no design columns".into()));
        }
        Ok(enc)
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for f in &self.features {
            match f {
                EncodedFeature::Numeric { name } => names.push(name.clone()),
                EncodedFeature::Categorical { name, levels } => {
                    names.extend(levels.iter().skip(1).map(|l| format!("{name}={l}")))
                }
            }
        }
        if let Some(s) = &self.sensitive {
            names.push(format!("{}={}", s.column, s.level_a));
        }
        names
    }

    pub fn ncols(&self) -> usize {
        self.column_names().len()
    }

    pub fn uses_sensitive(&self) -> bool {
        self.sensitive.is_some()
    }

    /// Encodes `data`; the sensitive indicator (when encoded) is read from the
    /// data itself.
    pub fn transform(&self, data: &Dataset) -> Result<ModelMatrix> {
        self.transform_with_indicator(data, None)
    }

    /// Encodes `data`, substituting `indicator` for the `1[D = a]` column.
    pub fn transform_with_indicator(&self, data: &Dataset, indicator: Option<&[f64]>) -> Result<ModelMatrix> {
        let n = data.n_rows();
        let names = self.column_names();
        let p = names.len();
        let mut design = Array2::<f64>::zeros((n, p));
        let mut col = 0;
        for f in &self.features {
            match f {
                EncodedFeature::Numeric { name } => {
                    let v = data.numeric(name)?;
                    for i in 0..n {
                        design[[i, col]] = v[i];
                    }
                    col += 1;
                }
                EncodedFeature::Categorical { name, levels } => {
                    let (data_levels, codes) = data.categorical(name)?;
                    // map data codes to encoder slots; unseen levels fall back to the reference
                    let slot: Vec<Option<usize>> = data_levels
                        .iter()
                        .map(|l| levels.iter().position(|x| x == l).filter(|&k| k > 0))
                        .collect();
                    for i in 0..n {
                        if let Some(k) = slot[codes[i] as usize] {
                            design[[i, col + k - 1]] = 1.0;
                        }
                    }
                    col += levels.len().saturating_sub(1);
                }
            }
        }
        if let Some(s) = &self.sensitive {
            let values: Vec<f64> = match indicator {
                Some(d) => {
                    if d.len() != n {
                        return Err(Error::Dimension { expected: n, found: d.len() });
                    }
                    d.to_vec()
                }
                None => {
                    let (levels, codes) = data.categorical(&s.column)?;
                    codes
                        .iter()
                        .map(|&c| if levels[c as usize] == s.level_a { 1.0 } else { 0.0 })
                        .collect()
                }
            };
            for i in 0..n {
                design[[i, col]] = values[i];
            }
        }
        ModelMatrix::new(design, names)
    }
}
