use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use safelab_core::acquisition::{
    bounds, expander_counts, expander_set, incumbent_value, maximizer_set, prob_expand, prob_improvement, prob_safe,
    safe_set,
};
use safelab_core::gp::posterior;
use safelab_core::seed;
use safelab_core::{GpPosterior, GridDomain, KernelParams, ObservationSet};

fn fit(params: &KernelParams, domain: &GridDomain, obs: &ObservationSet) -> GpPosterior {
    posterior(params, domain, obs).unwrap()
}

/// Unsafe points certified after adding `(x, y)` and refitting from scratch.
fn refit_gain(
    params: &KernelParams,
    domain: &GridDomain,
    obs: &ObservationSet,
    safe: &[bool],
    beta: f64,
    j_min: f64,
    x: usize,
    y: f64,
) -> (usize, usize) {
    let mut more = obs.clone();
    more.push(x, y);
    let b = bounds(&fit(params, domain, &more), beta).unwrap();
    let mut certain = 0;
    let mut borderline = 0;
    for (i, &s) in safe.iter().enumerate() {
        if !s {
            if (b.lower[i] - j_min).abs() < 1e-7 {
                borderline += 1;
            } else if b.lower[i] >= j_min {
                certain += 1;
            }
        }
    }
    (certain, borderline)
}

fn scenario() -> impl Strategy<Value = (f64, f64, f64, Vec<(usize, f64)>, f64, f64)> {
    (
        0.5f64..2.0,
        0.3f64..2.0,
        0.001f64..0.5,
        prop::collection::vec((0usize..21, -2.0f64..2.0), 1..6),
        -3.0f64..1.0,
        0.5f64..4.0,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn set_algebra_holds((sf, ell, noise, pairs, j_min, beta) in scenario()) {
        let params = KernelParams::new(sf, ell).unwrap();
        let domain = GridDomain::experiment1();
        let obs = ObservationSet::from_pairs(noise, pairs);
        let post = fit(&params, &domain, &obs);
        let b = bounds(&post, beta).unwrap();
        let safe = safe_set(&b, j_min);
        let max = maximizer_set(&b, &safe);
        let counts = expander_counts(&post, noise, &b, &safe, j_min).unwrap();
        let exp = expander_set(&counts, &safe);
        for i in 0..21 {
            prop_assert!(!max[i] || safe[i]);
            prop_assert!(!exp[i] || safe[i]);
            prop_assert!(safe[i] || counts[i] == 0);
        }
        // Raising the threshold or widening the bounds can only shrink the safe set.
        let stricter = safe_set(&b, j_min + 0.3);
        let wider = safe_set(&bounds(&post, beta * 1.5).unwrap(), j_min);
        for i in 0..21 {
            prop_assert!(!stricter[i] || safe[i]);
            prop_assert!(!wider[i] || safe[i]);
        }
    }

    #[test]
    fn expander_counts_match_refitting((sf, ell, noise, pairs, j_min, beta) in scenario()) {
        let params = KernelParams::new(sf, ell).unwrap();
        let domain = GridDomain::experiment1();
        let obs = ObservationSet::from_pairs(noise, pairs);
        let post = fit(&params, &domain, &obs);
        let b = bounds(&post, beta).unwrap();
        let safe = safe_set(&b, j_min);
        let counts = expander_counts(&post, noise, &b, &safe, j_min).unwrap();
        for x in (0..21).filter(|&x| safe[x]) {
            let (certain, borderline) = refit_gain(&params, &domain, &obs, &safe, beta, j_min, x, b.upper[x]);
            let c = counts[x] as usize;
            prop_assert!(c >= certain && c <= certain + borderline, "x={x}: {c} vs refit {certain}+{borderline}");
        }
    }
}

#[test]
fn prob_expand_matches_brute_force_refitting() {
    let mut rng = seed::rng(99);
    let domain = GridDomain::experiment1();
    let mut checked = 0;
    for case in 0..12 {
        let params = KernelParams::new(1.0, rng.random_range(0.5..1.5)).unwrap();
        let noise = rng.random_range(0.01..0.2);
        let obs = ObservationSet::from_pairs(noise, [(rng.random_range(0..21), rng.random_range(-0.5..1.5))]);
        let post = fit(&params, &domain, &obs);
        let b = bounds(&post, 2.0).unwrap();
        let j_min = -0.5;
        let safe = safe_set(&b, j_min);
        let p = prob_expand(&post, noise, &b, &safe, j_min, 20_000, case).unwrap();
        for x in (0..21).filter(|&x| safe[x]).take(3) {
            let sd = (post.sd[x].powi(2) + noise).sqrt();
            let draws = 1000;
            let hits = (0..draws)
                .filter(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    refit_gain(&params, &domain, &obs, &safe, 2.0, j_min, x, post.mean[x] + sd * z).0 > 0
                })
                .count();
            let brute = hits as f64 / draws as f64;
            assert!((brute - p[x]).abs() < 0.06, "case {case} x {x}: brute {brute} vs {}", p[x]);
            checked += 1;
        }
    }
    assert!(checked >= 12);
}

#[test]
fn probabilities_match_monte_carlo() {
    let params = KernelParams::new(1.0, 1.0).unwrap();
    let domain = GridDomain::experiment1();
    let obs = ObservationSet::from_pairs(0.05, [(4, 0.8), (12, -0.3), (15, 0.4)]);
    let post = fit(&params, &domain, &obs);
    let j_min = 0.0;
    let incumbent = incumbent_value(&post);
    let pi = prob_improvement(&post, incumbent);
    let ps = prob_safe(&post, j_min);
    let mut rng = seed::rng(3);
    let n = 100_000;
    for i in [0, 4, 8, 13, 20] {
        let (mut above_inc, mut above_j) = (0, 0);
        for _ in 0..n {
            let f = post.mean[i] + post.sd[i] * rng.sample::<f64, _>(StandardNormal);
            above_inc += (f >= incumbent) as usize;
            above_j += (f >= j_min) as usize;
        }
        assert!((above_inc as f64 / n as f64 - pi[i]).abs() < 0.01);
        assert!((above_j as f64 / n as f64 - ps[i]).abs() < 0.01);
    }
}
