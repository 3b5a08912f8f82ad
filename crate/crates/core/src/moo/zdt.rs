/// ZDT1 test problem on `[0, 1]^n`: `f1 = x1`, `f2 = g (1 - sqrt(f1 / g))`
/// with `g = 1 + 9 mean(x2..xn)`. The optimal front is `f2 = 1 - sqrt(f1)`.
pub fn zdt1(x: &[f64]) -> Vec<f64> {
    let f1 = x[0];
    let g = if x.len() > 1 {
        1.0 + 9.0 * x[1..].iter().sum::<f64>() / (x.len() - 1) as f64
    } else {
        1.0
    };
    vec![f1, g * (1.0 - (f1 / g).sqrt())]
}
