use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
        }
    }
}

/// Column roles of a pricing table.
///
/// Every column that is not the sensitive attribute, a target or the
/// exposure is a non-protected rating factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub sensitive: String,
    /// Level of the sensitive attribute playing the role of group `a`
    /// (numerator of the disparity ratio). Defaults to the first level in
    /// alphabetical order.
    #[serde(default)]
    pub group_a: Option<String>,
    pub target: String,
    #[serde(default)]
    pub count_target: Option<String>,
    #[serde(default)]
    pub exposure: Option<String>,
    #[serde(default)]
    pub permitted: Option<Vec<String>>,
}

impl Schema {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    fn is_role_column(&self, name: &str) -> bool {
        name == self.sensitive
            || name == self.target
            || self.count_target.as_deref() == Some(name)
            || self.exposure.as_deref() == Some(name)
    }

    /// Indices of the non-protected rating factors, in schema order.
    pub fn feature_indices(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| !self.is_role_column(&c.name))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.feature_indices()
            .into_iter()
            .map(|i| self.columns[i].name.as_str())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        let sensitive = self
            .column(&self.sensitive)
            .ok_or_else(|| Error::Schema(format!("sensitive column `{}` not declared", self.sensitive)))?;
        if sensitive.kind != FeatureKind::Categorical {
            return Err(Error::Schema(format!(
                "sensitive column `{}` must be categorical",
                self.sensitive
            )));
        }
        let mut numeric_roles = vec![&self.target];
        numeric_roles.extend(self.count_target.iter());
        numeric_roles.extend(self.exposure.iter());
        for name in numeric_roles {
            match self.column(name) {
                Some(c) if c.kind == FeatureKind::Numeric => {}
                Some(_) => return Err(Error::Schema(format!("column `{name}` must be numeric"))),
                None => return Err(Error::Schema(format!("column `{name}` not declared"))),
            }
        }
        if let Some(permitted) = &self.permitted {
            let features = self.feature_names();
            for p in permitted {
                if !features.contains(&p.as_str()) {
                    return Err(Error::Schema(format!(
                        "permitted column `{p}` is not a non-protected feature"
                    )));
                }
            }
        }
        if self.feature_indices().is_empty() {
            return Err(Error::Schema("schema has no non-protected features".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema {
            columns: vec![
                ColumnSpec::numeric("age"),
                ColumnSpec::categorical("region"),
                ColumnSpec::categorical("gender"),
                ColumnSpec::numeric("claims"),
            ],
            sensitive: "gender".into(),
            group_a: None,
            target: "claims".into(),
            count_target: None,
            exposure: None,
            permitted: None,
        }
    }

    #[test]
    fn features_exclude_roles() {
        let s = schema();
        s.validate().unwrap();
        assert_eq!(s.feature_names(), vec!["age", "region"]);
    }

    #[test]
    fn numeric_sensitive_rejected() {
        let mut s = schema();
        s.columns[2].kind = FeatureKind::Numeric;
        assert!(matches!(s.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn permitted_must_be_feature() {
        let mut s = schema();
        s.permitted = Some(vec!["gender".into()]);
        assert!(s.validate().is_err());
        s.permitted = Some(vec!["age".into()]);
        s.validate().unwrap();
    }
}
