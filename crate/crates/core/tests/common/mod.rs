#![allow(dead_code)]

use fairprice_core::datakit::{synth_generate, Dataset, GeneratorSpec};

pub fn confounded(n: usize, tau: f64, seed: u64) -> Dataset {
    synth_generate(&GeneratorSpec::confounded(n, tau), seed).unwrap()
}

pub fn balanced(n: usize, tau: f64, seed: u64) -> Dataset {
    synth_generate(&GeneratorSpec::balanced(n, tau), seed).unwrap()
}

pub fn rmse_between(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// Brute-force two-sample Kolmogorov-Smirnov statistic.
pub fn ks(a: &[f64], b: &[f64]) -> f64 {
    let mut pts: Vec<f64> = a.iter().chain(b).copied().collect();
    pts.sort_by(f64::total_cmp);
    pts.iter()
        .map(|&t| {
            let fa = a.iter().filter(|v| **v <= t).count() as f64 / a.len() as f64;
            let fb = b.iter().filter(|v| **v <= t).count() as f64 / b.len() as f64;
            (fa - fb).abs()
        })
        .fold(0.0, f64::max)
}

pub fn group_means(pred: &[f64], mask: &[bool]) -> (f64, f64) {
    let a: Vec<f64> = pred.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
    let b: Vec<f64> = pred.iter().zip(mask).filter(|(_, m)| !**m).map(|(v, _)| *v).collect();
    (mean(&a), mean(&b))
}
