//! Confidence bounds, the safe / maximizer / expander sets, and the
//! probabilistic choice features derived from a GP posterior.
//!
//! One-step lookahead ("what if we observed `y` at `x`?") is done with the
//! exact rank-one update of the current posterior rather than a refit:
//!
//! ```text
//! k'(a, b) = k(a, b) - k(a, x) k(x, b) / (k(x, x) + noise)
//! m'(a)    = m(a) + k(a, x) / (k(x, x) + noise) * (y - m(x))
//! ```
//!
//! The posterior variance after the update does not depend on `y`, so the set
//! of outcomes that would certify a new point as safe is a union of two
//! half-lines that can be computed once per candidate.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpModel, GpPosterior, ObservationSet, JITTER};
use crate::seed;
use crate::stats::prob_above;

pub const DEFAULT_BETA: f64 = 3.0;
pub const DEFAULT_EXPAND_SAMPLES: usize = 2000;

/// `upper = mean + beta * sd`, `lower = mean - beta * sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBounds {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub beta: f64,
}

impl ConfidenceBounds {
    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.upper[i] + self.lower[i])
    }

    fn best_lower(&self) -> f64 {
        self.lower.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn bounds(post: &GpPosterior, beta: f64) -> Result<ConfidenceBounds> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("beta must be a positive number, got {beta}")));
    }
    let (upper, lower) = post
        .mean
        .iter()
        .zip(&post.sd)
        .map(|(m, s)| (m + beta * s, m - beta * s))
        .unzip();
    Ok(ConfidenceBounds { upper, lower, beta })
}

/// Points whose lower bound clears the threshold (inclusive).
pub fn safe_set(b: &ConfidenceBounds, j_min: f64) -> Vec<bool> {
    b.lower.iter().map(|&l| l >= j_min).collect()
}

/// Safe points whose upper bound reaches the best lower bound anywhere on the
/// grid (not only among safe points).
pub fn maximizer_set(b: &ConfidenceBounds, safe: &[bool]) -> Vec<bool> {
    let best = b.best_lower();
    b.upper.iter().zip(safe).map(|(&u, &s)| s && u >= best).collect()
}

/// Rank-one lookahead at one candidate point.
struct Lookahead<'a> {
    post: &'a GpPosterior,
    beta: f64,
    candidate: usize,
    denom: f64,
}

impl<'a> Lookahead<'a> {
    fn new(post: &'a GpPosterior, noise_var: f64, beta: f64, candidate: usize) -> Self {
        let denom = post.cov[(candidate, candidate)] + noise_var + JITTER;
        Self { post, beta, candidate, denom }
    }

    /// `(gain, updated sd)` at `other`: the updated mean there is
    /// `mean[other] + gain * (y - mean[candidate])`.
    #[inline]
    fn at(&self, other: usize) -> (f64, f64) {
        let c = self.post.cov[(other, self.candidate)];
        let gain = c / self.denom;
        let var = (self.post.cov[(other, other)] - c * gain).max(0.0);
        (gain, var.sqrt())
    }

    fn lower_after(&self, other: usize, y: f64) -> f64 {
        let (gain, sd) = self.at(other);
        self.post.mean[other] + gain * (y - self.post.mean[self.candidate]) - self.beta * sd
    }

    /// Outcomes `y <= below` or `y >= above` certify at least one
    /// currently-unsafe point.
    fn expansion_region(&self, safe: &[bool], j_min: f64) -> ExpansionRegion {
        let m_x = self.post.mean[self.candidate];
        let mut region = ExpansionRegion::EMPTY;
        for (other, _) in safe.iter().enumerate().filter(|(_, &s)| !s) {
            let (gain, sd) = self.at(other);
            let needed = j_min - self.post.mean[other] + self.beta * sd;
            if gain > 0.0 {
                region.above = region.above.min(m_x + needed / gain);
            } else if gain < 0.0 {
                region.below = region.below.max(m_x + needed / gain);
            } else if needed <= 0.0 {
                return ExpansionRegion::ALL;
            }
        }
        region
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionRegion {
    pub below: f64,
    pub above: f64,
}

impl ExpansionRegion {
    const EMPTY: Self = Self { below: f64::NEG_INFINITY, above: f64::INFINITY };
    const ALL: Self = Self { below: f64::INFINITY, above: f64::NEG_INFINITY };

    pub fn contains(&self, y: f64) -> bool {
        y <= self.below || y >= self.above
    }

    pub fn is_empty(&self) -> bool {
        self.below == f64::NEG_INFINITY && self.above == f64::INFINITY
    }
}

/// Outcomes at `candidate` that would make some currently-unsafe point safe.
pub fn expansion_region(
    post: &GpPosterior,
    noise_var: f64,
    b: &ConfidenceBounds,
    safe: &[bool],
    j_min: f64,
    candidate: usize,
) -> ExpansionRegion {
    Lookahead::new(post, noise_var, b.beta, candidate).expansion_region(safe, j_min)
}

fn check_lengths(post: &GpPosterior, b: &ConfidenceBounds, safe: &[bool]) -> Result<()> {
    if b.len() != post.len() || safe.len() != post.len() {
        return Err(Error::invalid(format!(
            "length mismatch: posterior {}, bounds {}, safe mask {}",
            post.len(),
            b.len(),
            safe.len()
        )));
    }
    Ok(())
}

/// For every safe point, the number of currently-unsafe points whose lower
/// bound would clear `j_min` after observing the point's upper bound.
pub fn expander_counts(
    post: &GpPosterior,
    noise_var: f64,
    b: &ConfidenceBounds,
    safe: &[bool],
    j_min: f64,
) -> Result<Vec<u32>> {
    check_lengths(post, b, safe)?;
    let unsafe_points: Vec<usize> = (0..safe.len()).filter(|&i| !safe[i]).collect();
    if unsafe_points.is_empty() {
        return Ok(vec![0; safe.len()]);
    }
    let counts = (0..safe.len())
        .into_par_iter()
        .map(|x| {
            if !safe[x] {
                return 0;
            }
            let look = Lookahead::new(post, noise_var, b.beta, x);
            let y = b.upper[x];
            unsafe_points
                .iter()
                .filter(|&&other| look.lower_after(other, y) >= j_min)
                .count() as u32
        })
        .collect();
    Ok(counts)
}

pub fn expander_set(counts: &[u32], safe: &[bool]) -> Vec<bool> {
    counts.iter().zip(safe).map(|(&c, &s)| s && c >= 1).collect()
}

/// Maximum posterior mean: the value of the point currently believed best.
pub fn incumbent_value(post: &GpPosterior) -> f64 {
    post.mean.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn prob_improvement(post: &GpPosterior, incumbent: f64) -> Vec<f64> {
    post.mean
        .iter()
        .zip(&post.sd)
        .map(|(&m, &s)| prob_above(m, incumbent, s))
        .collect()
}

pub fn prob_safe(post: &GpPosterior, j_min: f64) -> Vec<f64> {
    post.mean
        .iter()
        .zip(&post.sd)
        .map(|(&m, &s)| prob_above(m, j_min, s))
        .collect()
}

/// Monte Carlo probability that observing each safe point grows the safe set.
///
/// Outcomes are drawn from the posterior predictive `N(m(x), s(x)^2 + noise)`
/// using one shared set of standard-normal draws for all points (common
/// random numbers), so a point's estimate is a count over sorted draws.
pub fn prob_expand(
    post: &GpPosterior,
    noise_var: f64,
    b: &ConfidenceBounds,
    safe: &[bool],
    j_min: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_lengths(post, b, safe)?;
    if n_samples == 0 {
        return Err(Error::invalid("prob_expand needs at least one sample"));
    }
    if safe.iter().all(|&s| s) {
        return Ok(vec![0.0; safe.len()]);
    }
    let mut rng = seed::rng(seed);
    let mut z: Vec<f64> = (0..n_samples).map(|_| rng.sample(StandardNormal)).collect();
    z.sort_by(f64::total_cmp);
    let n = n_samples as f64;

    let probs = (0..safe.len())
        .into_par_iter()
        .map(|x| {
            if !safe[x] {
                return 0.0;
            }
            let region = Lookahead::new(post, noise_var, b.beta, x).expansion_region(safe, j_min);
            if region.is_empty() {
                return 0.0;
            }
            let m = post.mean[x];
            let sd = (post.sd[x].powi(2) + noise_var).sqrt();
            let hits = if sd == 0.0 {
                if region.contains(m) {
                    z.len()
                } else {
                    0
                }
            } else if region.below >= region.above {
                z.len()
            } else {
                let lo = (region.below - m) / sd;
                let hi = (region.above - m) / sd;
                let below = z.partition_point(|&v| v <= lo);
                let above = z.len() - z.partition_point(|&v| v < hi);
                below + above
            };
            hits as f64 / n
        })
        .collect();
    Ok(probs)
}

/// Per-point set memberships and choice probabilities at one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetFeatures {
    pub safe: Vec<bool>,
    pub maximizer: Vec<bool>,
    pub expander: Vec<bool>,
    pub expander_count: Vec<u32>,
    pub p_safe: Vec<f64>,
    pub p_improve: Vec<f64>,
    pub p_expand: Vec<f64>,
    /// `None` when the task has no threshold at all.
    pub threshold: Option<f64>,
}

impl SetFeatures {
    pub fn len(&self) -> usize {
        self.safe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.safe.is_empty()
    }

    /// Numeric value of a named feature at one point.
    pub fn value(&self, name: &str, i: usize) -> Option<f64> {
        let b = |v: &[bool]| if v[i] { 1.0 } else { 0.0 };
        Some(match name {
            "safe" => b(&self.safe),
            "maximizer" => b(&self.maximizer),
            "expander" => b(&self.expander),
            "expander_count" => self.expander_count[i] as f64,
            "p_safe" => self.p_safe[i],
            "p_improve" => self.p_improve[i],
            "p_expand" => self.p_expand[i],
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSettings {
    pub beta: f64,
    pub expand_samples: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self { beta: DEFAULT_BETA, expand_samples: DEFAULT_EXPAND_SAMPLES }
    }
}

/// Everything an agent (or the session service) derives from one history.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub posterior: GpPosterior,
    pub bounds: ConfidenceBounds,
    pub features: SetFeatures,
}

/// The full acquisition pipeline: posterior, bounds, sets and probabilities.
///
/// `prior_mean` is a constant added to the zero-mean GP (outputs are
/// centered before fitting); `threshold` is the level used for the set
/// features, `None` meaning no threshold.
pub fn assess(
    model: &GpModel,
    obs: &ObservationSet,
    prior_mean: f64,
    threshold: Option<f64>,
    settings: &FeatureSettings,
    seed: u64,
) -> Result<Assessment> {
    let posterior = model.posterior(&obs.centered(prior_mean))?.shifted(prior_mean);
    let bounds = bounds(&posterior, settings.beta)?;
    let j_min = threshold.unwrap_or(f64::NEG_INFINITY);
    let safe = safe_set(&bounds, j_min);
    let maximizer = maximizer_set(&bounds, &safe);
    let expander_count = expander_counts(&posterior, obs.noise_var, &bounds, &safe, j_min)?;
    let expander = expander_set(&expander_count, &safe);
    let p_safe = prob_safe(&posterior, j_min);
    let p_improve = prob_improvement(&posterior, incumbent_value(&posterior));
    let p_expand = prob_expand(
        &posterior,
        obs.noise_var,
        &bounds,
        &safe,
        j_min,
        settings.expand_samples,
        seed,
    )?;
    Ok(Assessment {
        posterior,
        bounds,
        features: SetFeatures {
            safe,
            maximizer,
            expander,
            expander_count,
            p_safe,
            p_improve,
            p_expand,
            threshold,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{posterior, KernelParams};
    use crate::grid::GridDomain;
    use crate::stats::normal_cdf;
    use nalgebra::DMatrix;

    fn toy(mean: Vec<f64>, sd: Vec<f64>) -> GpPosterior {
        let n = mean.len();
        let cov = DMatrix::from_fn(n, n, |i, j| if i == j { sd[i] * sd[i] } else { 0.0 });
        GpPosterior { mean, sd, cov }
    }

    fn single_obs() -> GpPosterior {
        let grid = GridDomain::experiment1();
        let obs = ObservationSet::from_pairs(1.0, [(0, 1.0)]);
        posterior(&KernelParams::new(1.0, 1.0).unwrap(), &grid, &obs).unwrap()
    }

    #[test]
    fn bounds_examples() {
        let b = bounds(&toy(vec![0.0], vec![1.0]), DEFAULT_BETA).unwrap();
        assert_eq!((b.upper[0], b.lower[0]), (3.0, -3.0));

        let b = bounds(&toy(vec![1.5], vec![0.0]), 3.0).unwrap();
        assert_eq!(b.upper[0], 1.5);
        assert_eq!(b.lower[0], 1.5);

        let b = bounds(&single_obs(), 3.0).unwrap();
        assert!((b.upper[0] - 2.6213).abs() < 1e-4);
        assert!((b.lower[0] + 1.6213).abs() < 1e-4);
        assert!(bounds(&single_obs(), 0.0).is_err());
        assert!(bounds(&single_obs(), -1.0).is_err());
    }

    #[test]
    fn safe_set_examples() {
        let b = ConfidenceBounds { upper: vec![3.0, 1.0, 1.0], lower: vec![-1.62, 0.1, 0.0], beta: 3.0 };
        assert_eq!(safe_set(&b, 0.0), vec![false, true, true]);
        assert_eq!(safe_set(&b, f64::NEG_INFINITY), vec![true; 3]);
        assert_eq!(safe_set(&b, 0.2), vec![false; 3]);
    }

    #[test]
    fn maximizer_examples() {
        let b = ConfidenceBounds { upper: vec![1.0, 2.0, 5.0], lower: vec![0.0, 1.5, 3.0], beta: 3.0 };
        assert_eq!(maximizer_set(&b, &[true, true, false]), vec![false, false, false]);
        // Restricting the max to safe points would have admitted point 1.
        assert_eq!(maximizer_set(&b, &[false; 3]), vec![false; 3]);

        let same = ConfidenceBounds { upper: vec![2.0; 4], lower: vec![1.0; 4], beta: 3.0 };
        assert_eq!(maximizer_set(&same, &[true; 4]), vec![true; 4]);
    }

    #[test]
    fn expander_set_examples() {
        assert_eq!(expander_set(&[0, 0], &[true, true]), vec![false, false]);
        assert_eq!(expander_set(&[2, 0], &[true, true]), vec![true, false]);
        assert_eq!(expander_set(&[1], &[false]), vec![false]);
    }

    #[test]
    fn expander_counts_trivial_cases() {
        let post = single_obs();
        let b = bounds(&post, 3.0).unwrap();
        let all = vec![true; post.len()];
        assert!(expander_counts(&post, 1.0, &b, &all, f64::NEG_INFINITY).unwrap().iter().all(|&c| c == 0));
        let safe = safe_set(&b, -10.0);
        assert!(safe.iter().all(|&s| s));
        assert!(expander_counts(&post, 1.0, &b, &safe, -10.0).unwrap().iter().all(|&c| c == 0));
    }

    #[test]
    fn prob_improvement_examples() {
        let post = toy(vec![1.0, 2.0, 0.5], vec![1.0, 1.0, 0.0]);
        let pi = prob_improvement(&post, 1.0);
        assert_eq!(pi[0], 0.5);
        assert!((pi[1] - 0.8413).abs() < 1e-4);
        assert_eq!(pi[2], 0.0);
    }

    #[test]
    fn prob_safe_examples() {
        let post = toy(vec![0.0, 3.0], vec![1.0, 1.0]);
        let ps = prob_safe(&post, 0.0);
        assert_eq!(ps[0], 0.5);
        assert!((ps[1] - 0.99865).abs() < 1e-5);
        assert_eq!(ps[1], normal_cdf(3.0));
        let prior = toy(vec![0.0; 5], vec![1.0; 5]);
        assert!(prob_safe(&prior, 0.0).iter().all(|&p| p == 0.5));
    }

    #[test]
    fn prob_expand_full_safe_set_is_zero() {
        let post = single_obs();
        let b = bounds(&post, 3.0).unwrap();
        let p = prob_expand(&post, 1.0, &b, &vec![true; post.len()], 0.0, 100, 1).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
        assert!(prob_expand(&post, 1.0, &b, &vec![true; post.len()], 0.0, 0, 1).is_err());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let post = single_obs();
        let b = bounds(&post, 3.0).unwrap();
        assert!(expander_counts(&post, 1.0, &b, &[true], 0.0).is_err());
    }
}
