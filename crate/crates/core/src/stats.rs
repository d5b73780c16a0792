use std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `P(Z >= -z)` style standardized probability `Φ((value - level) / sd)`,
/// with the step convention for `sd == 0`.
pub fn prob_above(value: f64, level: f64, sd: f64) -> f64 {
    if sd > 0.0 {
        normal_cdf((value - level) / sd)
    } else if value >= level {
        1.0
    } else {
        0.0
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Welch's one-sided test that `mean(a) > mean(b)`. Returns `(t, p)` using a
/// normal approximation to the t distribution, which is accurate at the
/// sample sizes this crate uses (hundreds of blocks).
pub fn welch_greater(a: &[f64], b: &[f64]) -> (f64, f64) {
    let se = (variance(a) / a.len() as f64 + variance(b) / b.len() as f64).sqrt();
    let t = (mean(a) - mean(b)) / se;
    (t, 1.0 - normal_cdf(t))
}
