use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datakit::ModelMatrix;
use crate::error::{domain, Error, Result};

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Also used as quasi-Poisson for non-integer, non-negative targets.
    Poisson,
    Gamma,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Log,
    Identity,
}

impl Family {
    pub fn canonical_link(self) -> Link {
        match self {
            Family::Poisson | Family::Gamma => Link::Log,
            Family::Gaussian => Link::Identity,
        }
    }

    fn check_target(self, y: &[f64]) -> Result<()> {
        for (i, &v) in y.iter().enumerate() {
            let ok = match self {
                Family::Poisson => v.is_finite() && v >= 0.0,
                Family::Gamma => v.is_finite() && v > 0.0,
                Family::Gaussian => v.is_finite(),
            };
            if !ok {
                return domain(format!("target value {v} at row {i} invalid for {self:?} family"));
            }
        }
        Ok(())
    }

    /// Unit deviance contribution of one observation.
    fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Poisson => {
                let t = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                2.0 * (t - (y - mu))
            }
            Family::Gamma => 2.0 * (-(y / mu).ln() + (y - mu) / mu),
            Family::Gaussian => (y - mu) * (y - mu),
        }
    }

    /// Variance function V(mu).
    fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Poisson => mu,
            Family::Gamma => mu * mu,
            Family::Gaussian => 1.0,
        }
    }
}

impl Link {
    fn apply(self, mu: f64) -> f64 {
        match self {
            Link::Log => mu.ln(),
            Link::Identity => mu,
        }
    }

    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Log => eta.exp(),
            Link::Identity => eta,
        }
    }

    /// d mu / d eta
    fn mu_eta(self, mu: f64) -> f64 {
        match self {
            Link::Log => mu,
            Link::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub family: Family,
    pub link: Link,
    /// Intercept first, then one coefficient per design column.
    pub coefficients: Vec<f64>,
    pub column_names: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
}

impl GlmModel {
    pub fn linear_predictor(&self, mm: &ModelMatrix) -> Result<Vec<f64>> {
        let p = self.coefficients.len() - 1;
        if mm.ncols() != p {
            return Err(Error::Dimension {
                expected: p,
                found: mm.ncols(),
            });
        }
        Ok(mm
            .design
            .rows()
            .into_iter()
            .map(|r| self.coefficients[0] + r.iter().zip(&self.coefficients[1..]).map(|(x, b)| x * b).sum::<f64>())
            .collect())
    }

    pub fn predict(&self, mm: &ModelMatrix) -> Result<Vec<f64>> {
        Ok(self
            .linear_predictor(mm)?
            .into_iter()
            .map(|e| self.link.inverse(e))
            .collect())
    }
}

pub fn glm_predict(m: &GlmModel, mm: &ModelMatrix) -> Result<Vec<f64>> {
    m.predict(mm)
}

/// Fits a GLM with the family's canonical link (log for Poisson and Gamma) by
/// iteratively reweighted least squares.
pub fn glm_fit(mm: &ModelMatrix, y: &[f64], family: Family, weights: Option<&[f64]>) -> Result<GlmModel> {
    let n = mm.nrows();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, found: y.len() });
    }
    if n == 0 {
        return domain("cannot fit a GLM on zero rows");
    }
    family.check_target(y)?;
    let prior: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Dimension { expected: n, found: w.len() });
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return domain("weights must be finite and non-negative");
            }
            w.to_vec()
        }
        None => vec![1.0; n],
    };
    let wsum: f64 = prior.iter().sum();
    if wsum <= 0.0 {
        return domain("weights sum to zero");
    }
    let link = family.canonical_link();
    let ybar = y.iter().zip(&prior).map(|(a, w)| a * w).sum::<f64>() / wsum;
    if link == Link::Log && ybar <= 0.0 {
        return domain("log-link GLM needs a positive mean response");
    }

    let p = mm.ncols() + 1;
    let mut names = vec!["(intercept)".to_string()];
    names.extend(mm.column_names.iter().cloned());
    let x = &mm.design;

    let mut beta = vec![0.0; p];
    beta[0] = link.apply(ybar);
    let eta_of = |b: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| b[0] + (1..p).map(|j| x[[i, j - 1]] * b[j]).sum::<f64>())
            .collect()
    };
    let deviance_of = |eta: &[f64]| -> f64 {
        (0..n)
            .map(|i| prior[i] * family.unit_deviance(y[i], link.inverse(eta[i])))
            .sum()
    };

    let mut eta = eta_of(&beta);
    let mut dev = deviance_of(&eta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let mut xtwx = Array2::<f64>::zeros((p, p));
        let mut xtwz = vec![0.0; p];
        let mut row = vec![0.0; p];
        row[0] = 1.0;
        for i in 0..n {
            let mu = link.inverse(eta[i]);
            let d = link.mu_eta(mu);
            let w = prior[i] * d * d / family.variance(mu);
            if w == 0.0 {
                continue;
            }
            let z = eta[i] + (y[i] - mu) / d;
            for j in 1..p {
                row[j] = x[[i, j - 1]];
            }
            for a in 0..p {
                let wa = w * row[a];
                xtwz[a] += wa * z;
                for b in a..p {
                    xtwx[[a, b]] += wa * row[b];
                }
            }
        }
        let new_beta = solve_spd(&xtwx, &xtwz, &names)?;

        // step-halving guards against overshoot into non-finite or worse fits
        let mut step = 1.0;
        let mut candidate = new_beta.clone();
        let mut cand_eta = eta_of(&candidate);
        let mut cand_dev = deviance_of(&cand_eta);
        let mut halvings = 0;
        while (!cand_dev.is_finite() || cand_dev > dev * (1.0 + 1e-10) + 1e-12) && halvings < 30 {
            step *= 0.5;
            halvings += 1;
            candidate = beta.iter().zip(&new_beta).map(|(b, nb)| b + step * (nb - b)).collect();
            cand_eta = eta_of(&candidate);
            cand_dev = deviance_of(&cand_eta);
        }
        if !cand_dev.is_finite() {
            return Err(Error::Divergence { epoch: iterations });
        }
        let delta = candidate
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = candidate;
        eta = cand_eta;
        dev = cand_dev;
        if delta < TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("IRLS did not converge in {MAX_ITER} iterations");
    }
    Ok(GlmModel {
        family,
        link,
        coefficients: beta,
        column_names: mm.column_names.clone(),
        converged,
        iterations,
        deviance: dev,
    })
}

/// Solves `A x = b` for symmetric positive definite `A` (upper triangle
/// filled) by Cholesky; a vanishing pivot is reported as a rank error on the
/// corresponding column.
fn solve_spd(a: &Array2<f64>, b: &[f64], names: &[String]) -> Result<Vec<f64>> {
    let p = b.len();
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let ajj = a[[j, j]];
        let mut d = ajj;
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 1e-10 * ajj.abs().max(f64::MIN_POSITIVE)) || ajj <= 0.0 {
            return Err(Error::Rank {
                column: names[j].clone(),
            });
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in j + 1..p {
            let mut s = a[[j, i]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    let mut z = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn intercept_only(n: usize) -> ModelMatrix {
        ModelMatrix {
            design: Array2::zeros((n, 0)),
            column_names: vec![],
        }
    }

    #[test]
    fn null_poisson_intercept_is_log_mean() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let m = glm_fit(&intercept_only(5), &y, Family::Poisson, None).unwrap();
        assert!((m.coefficients[0] - 3f64.ln()).abs() < 1e-12);
        assert!(m.converged);
    }

    #[test]
    fn null_gamma_intercept_is_log_mean() {
        let y = [100.0, 200.0, 450.0];
        let m = glm_fit(&intercept_only(3), &y, Family::Gamma, None).unwrap();
        assert!((m.coefficients[0] - 250f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gamma_rejects_zero() {
        let r = glm_fit(&intercept_only(2), &[0.0, 1.0], Family::Gamma, None);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn predict_examples() {
        let m = GlmModel {
            family: Family::Poisson,
            link: Link::Log,
            coefficients: vec![0.0, 0.8],
            column_names: vec!["x".into()],
            converged: true,
            iterations: 1,
            deviance: 0.0,
        };
        let p = m.predict(&ModelMatrix::from_column("x", &[0.0, 1.0])).unwrap();
        assert_eq!(p[0], 1.0);
        assert!((p[1] / p[0] - 0.8f64.exp()).abs() < 1e-12);
        let wrong = ModelMatrix::from_rows(&["a", "b"], &[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(m.predict(&wrong), Err(Error::Dimension { .. })));
    }

    #[test]
    fn collinear_column_is_named() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let mm = ModelMatrix::from_rows(&["a", "twice_a"], &rows).unwrap();
        let y: Vec<f64> = (0..20).map(|i| (i % 4) as f64 + 1.0).collect();
        match glm_fit(&mm, &y, Family::Poisson, None) {
            Err(Error::Rank { column }) => assert_eq!(column, "twice_a"),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn poisson_recovers_coefficients_and_scores_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64) * 2.0 - 1.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| Poisson::new((0.5 + 0.8 * xi).exp()).unwrap().sample(&mut rng))
            .collect();
        let mm = ModelMatrix::from_column("x", &x);
        let m = glm_fit(&mm, &y, Family::Poisson, None).unwrap();
        assert!(m.converged);
        assert!((m.coefficients[0] - 0.5).abs() < 0.05);
        assert!((m.coefficients[1] - 0.8).abs() < 0.05);
        let mu = m.predict(&mm).unwrap();
        let s0: f64 = y.iter().zip(&mu).map(|(a, b)| a - b).sum();
        let s1: f64 = (0..n).map(|i| x[i] * (y[i] - mu[i])).sum();
        assert!(s0.abs() < 1e-6 && s1.abs() < 1e-6, "{s0} {s1}");
    }

    #[test]
    fn gaussian_matches_least_squares() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let m = glm_fit(&ModelMatrix::from_column("x", &x), &y, Family::Gaussian, None).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((m.coefficients[1] - 2.0).abs() < 1e-10);
    }
}
