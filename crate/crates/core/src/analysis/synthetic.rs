//! Synthetic choice data generated from known models, for recovery checks.

use rand::Rng;

use crate::agents::TreeParams;
use crate::seed;

use super::Design;

fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

fn bernoulli(rng: &mut impl Rng, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Set-membership indicators with a logistic choice model on top.
/// Maximizer and expander membership are independent draws inside the safe set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedLogistic {
    /// Intercept, safe, maximizer, expander.
    pub coefficients: [f64; 4],
    pub safe_rate: f64,
    pub maximizer_rate: f64,
    pub expander_rate: f64,
    pub rows: usize,
}

impl PlantedLogistic {
    pub const NAMES: [&'static str; 3] = ["safe", "maximizer", "expander"];

    pub fn new(coefficients: [f64; 4], rows: usize) -> Self {
        Self { coefficients, safe_rate: 0.5, maximizer_rate: 0.5, expander_rate: 0.5, rows }
    }

    pub fn generate(&self, seed_value: u64) -> Design {
        let mut rng = seed::rng(seed_value);
        let mut columns: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(self.rows)).collect();
        let mut outcome = Vec::with_capacity(self.rows);
        let [b0, bs, bm, be] = self.coefficients;
        for _ in 0..self.rows {
            let s = bernoulli(&mut rng, self.safe_rate);
            let m = s * bernoulli(&mut rng, self.maximizer_rate);
            let e = s * bernoulli(&mut rng, self.expander_rate);
            outcome.push(bernoulli(&mut rng, sigmoid(b0 + bs * s + bm * m + be * e)));
            columns[0].push(s);
            columns[1].push(m);
            columns[2].push(e);
        }
        Design { names: Self::NAMES.iter().map(|s| s.to_string()).collect(), columns, outcome }
    }
}

/// Probability features with choices drawn from a threshold rule:
/// rows passing `p_safe > safe_cut` and `p_improve > improve_cut` are chosen
/// at `inside_rate`, all others at `outside_rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedTree {
    pub rule: TreeParams,
    pub inside_rate: f64,
    pub outside_rate: f64,
    pub rows: usize,
}

impl PlantedTree {
    pub const NAMES: [&'static str; 3] = ["p_safe", "p_improve", "p_expand"];

    pub fn new(rule: TreeParams, rows: usize) -> Self {
        Self { rule, inside_rate: 0.6, outside_rate: 0.02, rows }
    }

    /// Half of the probabilities are uniform on [0, 1]; the other half
    /// crowd toward 1 the way safety probabilities do near observed points.
    fn probability(rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        if rng.random::<bool>() {
            u
        } else {
            1.0 - u * u * u * 0.3
        }
    }

    pub fn generate(&self, seed_value: u64) -> Design {
        let mut rng = seed::rng(seed_value);
        let mut columns: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(self.rows)).collect();
        let mut outcome = Vec::with_capacity(self.rows);
        for _ in 0..self.rows {
            let p_safe = Self::probability(&mut rng);
            let p_improve: f64 = rng.random();
            let p_expand: f64 = rng.random();
            let inside = p_safe > self.rule.safe_cut && p_improve > self.rule.improve_cut;
            let rate = if inside { self.inside_rate } else { self.outside_rate };
            outcome.push(bernoulli(&mut rng, rate));
            columns[0].push(p_safe);
            columns[1].push(p_improve);
            columns[2].push(p_expand);
        }
        Design { names: Self::NAMES.iter().map(|s| s.to_string()).collect(), columns, outcome }
    }
}
