use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::stats::Ecdf;

/// Group-wise empirical distributions of best-estimate premiums and the
/// transport between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarycenterMap {
    pub f_a: Ecdf,
    pub f_b: Ecdf,
    pub p_a: f64,
    pub p_b: f64,
}

impl BarycenterMap {
    pub fn new(sample_a: &[f64], sample_b: &[f64], p_a: f64, p_b: f64) -> Result<Self> {
        if sample_a.len() < 2 || sample_b.len() < 2 {
            return domain("each group needs at least 2 training predictions");
        }
        if !(p_a >= 0.0 && p_b >= 0.0) || ((p_a + p_b) - 1.0).abs() > 1e-12 {
            return domain(format!("group proportions ({p_a}, {p_b}) must be non-negative and sum to 1"));
        }
        Ok(Self {
            f_a: Ecdf::new(sample_a)?,
            f_b: Ecdf::new(sample_b)?,
            p_a,
            p_b,
        })
    }

    /// Barycentric premium for a best-estimate `s` of a row in group `a`
    /// (`in_a = true`) or `b`.
    pub fn transport(&self, s: f64, in_a: bool) -> f64 {
        if in_a {
            self.p_a * s + self.p_b * self.f_b.quantile(self.f_a.cdf(s))
        } else {
            self.p_b * s + self.p_a * self.f_a.quantile(self.f_b.cdf(s))
        }
    }
}
